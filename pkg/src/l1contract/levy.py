"""Levy measures, their moment integrals and the dual supersolution constants.

Every measure is integrated one half-line at a time.  The negative half is the
positive half of the reflected measure, so symmetric measures produce two
bitwise-equal halves and odd moments cancel exactly.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import integrate

from .errors import Divergent, NotTempered

_EPSREL = 1e-13
_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)


def _quad(func, lo, hi, **kwargs) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=_EPSREL, limit=200, **kwargs)
    return float(value)


def _power_exp_integral(power: float, rate: float, a: float, b: float) -> float:
    """Integral of z**power * exp(-rate*z) over (a, b] with 0 <= a < b <= inf, rate >= 0."""
    if rate == 0.0:
        e = power + 1.0
        if (a == 0.0 and e <= 0.0) or (math.isinf(b) and e >= 0.0):
            return math.inf
        if e == 0.0:
            return math.log(b / a)
        hi = 0.0 if math.isinf(b) else b**e
        lo = 0.0 if a == 0.0 else a**e
        return (hi - lo) / e
    total = 0.0
    if a == 0.0:
        if power <= -1.0:
            return math.inf
        top = min(b, 1.0)
        # algebraic end-point weight handles the singular factor exactly
        total += _quad(lambda z: math.exp(-rate * z), 0.0, top, weight="alg", wvar=(power, 0.0))
        a = top
        if a >= b:
            return total
    if math.isinf(b):
        # z = e^s turns the tail into a double-exponentially decaying integrand
        # beyond z = a + 800/rate the integrand is below exp(-800) relative to its start
        f = lambda s: math.exp((power + 1.0) * s - rate * math.exp(s))
        return total + _quad(f, math.log(a), math.log(a + 800.0 / rate))
    return total + _quad(lambda z: z**power * math.exp(-rate * z), a, b)


def _weight_value(weight: tuple[str, float], z):
    kind, p = weight
    if kind == "exp":
        return np.exp(p * z)
    return z**p


@dataclass(frozen=True)
class Stable:
    """Density c |z|^(-1-alpha)."""

    alpha: float
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha out of (0,2): {self.alpha}")
        if self.c <= 0.0:
            raise ValueError("c must be positive")

    def reflect(self) -> "Stable":
        return self

    @property
    def is_symmetric(self) -> bool:
        return True

    def _half(self, weight, a, b):
        kind, p = weight
        if kind == "exp":
            if p > 0.0:
                raise Divergent(f"stable measure has no exponential moment of rate {p}")
            p = 0.0
        return self.c * _power_exp_integral(p - 1.0 - self.alpha, 0.0, a, b)


@dataclass(frozen=True)
class TemperedStable:
    """Density c exp(-lam |z|) |z|^(-1-alpha)."""

    alpha: float
    lam: float
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha out of (0,2): {self.alpha}")
        if self.lam <= 0.0 or self.c <= 0.0:
            raise ValueError("lambda and c must be positive")

    def reflect(self) -> "TemperedStable":
        return self

    @property
    def is_symmetric(self) -> bool:
        return True

    def _half(self, weight, a, b):
        kind, p = weight
        if kind == "exp":
            rate, power = self.lam - p, -1.0 - self.alpha
            if rate < 0.0:
                raise Divergent(f"exponential rate {p} exceeds tempering rate {self.lam}")
        else:
            rate, power = self.lam, p - 1.0 - self.alpha
        value = self.c * _power_exp_integral(power, rate, a, b)
        if math.isinf(value):
            raise Divergent("exponential moment diverges at the tempering rate")
        return value


@dataclass(frozen=True)
class Atomic:
    """Finite sum of point masses, atoms given as (offset, weight)."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(z), float(w)) for z, w in self.atoms)
        for z, w in atoms:
            if z == 0.0:
                raise ValueError("atom at the origin")
            if not w > 0.0:
                raise ValueError("atom weights must be positive")
        object.__setattr__(self, "atoms", atoms)

    def reflect(self) -> "Atomic":
        return Atomic(tuple((-z, w) for z, w in self.atoms))

    @property
    def is_symmetric(self) -> bool:
        return sorted(self.atoms) == sorted(self.reflect().atoms)

    def _half(self, weight, a, b):
        terms = [w * _weight_value(weight, z) for z, w in self.atoms if a < z <= b]
        return math.fsum(terms)


@dataclass(frozen=True)
class TabulatedDensity:
    """Piecewise-linear density on the nodes with an exponential tail past the outer nodes.

    Between the origin and the innermost node of each half-line the density is
    zero; the table is integrated exactly as a piecewise-linear function, which
    is the trapezoid rule on the nodes.
    """

    nodes: tuple[float, ...]
    densities: tuple[float, ...]
    decay_rate: float = 0.0

    def __post_init__(self):
        nodes = tuple(float(z) for z in self.nodes)
        dens = tuple(float(d) for d in self.densities)
        if len(nodes) != len(dens) or not nodes:
            raise ValueError("nodes and densities must be non-empty and of equal length")
        if any(z == 0.0 for z in nodes) or any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("nodes must be strictly increasing and exclude 0")
        if any(d < 0.0 for d in dens):
            raise ValueError("densities must be nonnegative")
        if self.decay_rate < 0.0:
            raise ValueError("decay_rate must be nonnegative")
        if self.decay_rate == 0.0 and (dens[0] > 0.0 or dens[-1] > 0.0):
            raise ValueError("a table without decay must vanish at its outer nodes")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "densities", dens)

    @classmethod
    def from_csv(cls, path: str | Path, decay_rate: float) -> "TabulatedDensity":
        nodes, dens = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    z, d = float(row[0]), float(row[1])
                except ValueError:
                    continue  # header line
                nodes.append(z)
                dens.append(d)
        return cls(tuple(nodes), tuple(dens), decay_rate)

    def half_density(self, z: np.ndarray) -> np.ndarray:
        """Density at points z > 0."""
        z = np.asarray(z, dtype=float)
        pos = [(a, d) for a, d in zip(self.nodes, self.densities) if a > 0.0]
        if not pos:
            return np.zeros_like(z)
        zs = np.array([a for a, _ in pos])
        ds = np.array([d for _, d in pos])
        out = np.interp(z, zs, ds, left=0.0, right=0.0)
        tail = z > zs[-1]
        out[tail] = ds[-1] * np.exp(-self.decay_rate * (z[tail] - zs[-1]))
        out[z < zs[0]] = 0.0
        return out

    def reflect(self) -> "TabulatedDensity":
        return TabulatedDensity(
            tuple(-z for z in reversed(self.nodes)), tuple(reversed(self.densities)), self.decay_rate
        )

    @property
    def is_symmetric(self) -> bool:
        return self == self.reflect()

    def _half(self, weight, a, b):
        pos = [(z, d) for z, d in zip(self.nodes, self.densities) if z > 0.0]
        if not pos:
            return 0.0
        terms = []
        for (z0, d0), (z1, d1) in zip(pos, pos[1:]):
            lo, hi = max(a, z0), min(b, z1)
            if lo < hi:
                x, w = _GL8
                zz = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
                dens = d0 + (d1 - d0) * (zz - z0) / (z1 - z0)
                terms.append(0.5 * (hi - lo) * float(np.dot(w, dens * _weight_value(weight, zz))))
        z_end, d_end = pos[-1]
        start = max(a, z_end)
        if b > start and d_end > 0.0:
            terms.append(self._tail(weight, z_end, d_end, start, b))
        return math.fsum(terms)

    def _tail(self, weight, z_end, d_end, start, b):
        kind, p = weight
        lam = self.decay_rate
        if math.isinf(b):
            scale = d_end * math.exp(-lam * (start - z_end))
            if kind == "exp":
                if lam <= p:
                    raise Divergent(f"exponential rate {p} reaches the table decay rate {lam}")
                return scale * math.exp(p * start) / (lam - p)
            s = start
            return scale * {0: 1 / lam, 1: s / lam + 1 / lam**2, 2: s * s / lam + 2 * s / lam**2 + 2 / lam**3}[int(p)]
        pieces = max(1, int(math.ceil(b - start)))
        edges = np.linspace(start, b, pieces + 1)
        x, w = _GL16
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            zz = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            vals = d_end * np.exp(-lam * (zz - z_end)) * _weight_value(weight, zz)
            total += 0.5 * (hi - lo) * float(np.dot(w, vals))
        return total


LevyMeasure = Union[Stable, TemperedStable, Atomic, TabulatedDensity]


def fractional_laplacian_constant(alpha: float) -> float:
    """Density constant making the stable operator equal to -(-Laplacian)^(alpha/2) in 1-D."""
    return alpha * 2.0 ** (alpha - 1.0) * math.gamma(0.5 * (1.0 + alpha)) / (
        math.sqrt(math.pi) * math.gamma(1.0 - 0.5 * alpha)
    )


def fractional_laplacian(alpha: float) -> Stable:
    return Stable(alpha, fractional_laplacian_constant(alpha))


@dataclass(frozen=True)
class OperatorKind:
    """Either the Laplacian (measure is None) or a Levy operator; `adjoint` reflects the measure."""

    measure: LevyMeasure | None = None
    adjoint: bool = False

    @classmethod
    def laplacian(cls, adjoint: bool = False) -> "OperatorKind":
        return cls(None, adjoint)

    @classmethod
    def levy(cls, measure: LevyMeasure, adjoint: bool = False) -> "OperatorKind":
        return cls(measure, adjoint)

    @property
    def is_local(self) -> bool:
        return self.measure is None

    def dual(self) -> "OperatorKind":
        return OperatorKind(self.measure, not self.adjoint)

    def effective_measure(self) -> LevyMeasure:
        if self.measure is None:
            raise ValueError("the Laplacian has no Levy measure")
        return self.measure.reflect() if self.adjoint else self.measure

    def describe(self) -> str:
        if self.is_local:
            return "laplacian"
        return f"levy({self.measure!r}, adjoint={self.adjoint})"


@dataclass(frozen=True)
class SupersolutionConstants:
    k: float
    K: float
    C: float
    C_k: float


def _halves(mu, weight, a, b):
    return mu._half(weight, a, b), mu.reflect()._half(weight, a, b)


def half_line_mass(mu: LevyMeasure, a: float, b: float) -> float:
    """Mass of (a, b] on the positive half-line, 0 <= a < b <= inf."""
    if b <= a:
        return 0.0
    return mu._half(("pow", 0.0), a, b)


def second_moment_near(mu: LevyMeasure, r: float) -> float:
    """Integral of z^2 over 0 < |z| <= r."""
    if r <= 0.0:
        raise ValueError("r must be positive")
    pos, neg = _halves(mu, ("pow", 2.0), 0.0, r)
    return pos + neg


def tail_mass(mu: LevyMeasure, r: float) -> float:
    """Mass of |z| > r."""
    if r <= 0.0:
        raise ValueError("r must be positive")
    pos, neg = _halves(mu, ("pow", 0.0), r, math.inf)
    return pos + neg


def drift_correction(mu: LevyMeasure, r: float) -> float:
    """Minus the first moment over r < |z| <= 1; zero for r >= 1."""
    if r <= 0.0:
        raise ValueError("r must be positive")
    if r >= 1.0:
        return 0.0
    pos, neg = _halves(mu, ("pow", 1.0), r, 1.0)
    return neg - pos


def assert_tempered(mu: LevyMeasure, exp_rate: float) -> float:
    """Exponential moment over |z| > 1 at the given rate; raises Divergent if infinite."""
    if exp_rate < 0.0:
        raise ValueError("exp_rate must be nonnegative")
    pos, neg = _halves(mu, ("exp", float(exp_rate)), 1.0, math.inf)
    total = pos + neg
    if not math.isfinite(total):
        raise Divergent(f"exponential moment of rate {exp_rate} is infinite")
    return total


def supersolution_constants(
    op: OperatorKind, exp_rate: float, phi0_sup: float, phi0_radius: float
) -> SupersolutionConstants:
    """Constants of the barrier C exp(K t) exp(-k|x|) for the dual equation of `op`."""
    if op.is_local:
        k = 1.0
        C_k = k * k
    else:
        mu = op.effective_measure()
        try:
            far = assert_tempered(mu, exp_rate)
        except Divergent as exc:
            raise NotTempered(str(exc)) from exc
        k = float(exp_rate)
        C_k = 0.5 * math.exp(k) * k * k * second_moment_near(mu, 1.0) + far
    return SupersolutionConstants(k=k, K=C_k, C=phi0_sup * math.exp(k * phi0_radius), C_k=C_k)


def measure_from_config(spec: dict, base_dir: str | Path = ".") -> LevyMeasure:
    """Build a measure from a config table such as {kind = "tempered", alpha = 1, lambda = 2}."""
    kind = spec.get("kind")
    if kind == "stable":
        if "c" not in spec:
            return fractional_laplacian(float(spec["alpha"]))
        return Stable(float(spec["alpha"]), float(spec["c"]))
    if kind == "tempered":
        return TemperedStable(float(spec["alpha"]), float(spec["lambda"]), float(spec.get("c", 1.0)))
    if kind == "atomic":
        return Atomic(tuple((float(z), float(w)) for z, w in spec["atoms"]))
    if kind == "table":
        path = Path(spec["file"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        return TabulatedDensity.from_csv(path, float(spec.get("decay_rate", 0.0)))
    raise ValueError(f"unknown measure kind {kind!r}")


def measure_to_config(mu: LevyMeasure) -> dict:
    if isinstance(mu, Stable):
        return {"kind": "stable", "alpha": mu.alpha, "c": mu.c}
    if isinstance(mu, TemperedStable):
        return {"kind": "tempered", "alpha": mu.alpha, "lambda": mu.lam, "c": mu.c}
    if isinstance(mu, Atomic):
        return {"kind": "atomic", "atoms": [list(a) for a in mu.atoms]}
    return {"kind": "table", "nodes": list(mu.nodes), "densities": list(mu.densities), "decay_rate": mu.decay_rate}
