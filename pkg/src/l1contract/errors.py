"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class L1ContractError(Exception):
    """Base class for every error raised by the package."""


class NumericalFailure(L1ContractError):
    """A computation could not be carried out to the required accuracy."""


class Divergent(L1ContractError, ValueError):
    """An exponential moment of a Levy measure is infinite."""


class NotTempered(Divergent):
    """The measure lacks the exponential tail needed for the dual bound."""


class SplitTooSmall(L1ContractError, ValueError):
    """Small-jump radius below one cell width."""


class BallExceedsDomain(L1ContractError, ValueError):
    """A ball-restricted quantity would read outside the grid."""


class KernelNotIntegrable(L1ContractError, ValueError):
    """A convolution kernel has non-zero far fields."""


class DegenerateProblem(L1ContractError):
    """No transport or diffusion: the CFL denominator vanishes."""


class CflViolation(NumericalFailure):
    """Requested time step exceeds the monotonicity bound."""


class TestFunctionTouchesBoundary(L1ContractError, ValueError):
    """A test function is not compactly supported inside the space-time domain."""

    __test__ = False


class DomainTooSmall(NumericalFailure):
    """The periodic extension cannot resolve the kernel tails."""


class SpectralNegativity(NumericalFailure):
    """Spectral ringing produced negative kernel values beyond the clamp."""


class TimeOutOfRange(L1ContractError, ValueError):
    """A requested time lies outside the stored snapshots."""


class SnapshotMismatch(L1ContractError, ValueError):
    """Two snapshot sequences do not share their time stamps."""


class ConfigError(L1ContractError, ValueError):
    """A run configuration could not be read or validated."""


class ParseError(ConfigError):
    """Syntax error in a configuration file."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(ConfigError):
    """All violations found in a configuration, reported together."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))
