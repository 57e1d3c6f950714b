"""Run configuration: TOML files, named presets and whole-config validation.

A config is a preset name plus overrides.  The preset is deep-merged under the
file's own keys, the result is validated in one pass, and every violation is
reported together.
"""

from __future__ import annotations

import copy
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import levy
from .errors import Divergent, ParseError, ValidationError
from .grid import Grid
from .levy import OperatorKind
from .scheme import FluxSpec, InitialData, PhiSpec, ProblemSpec, ScenarioPair, Source

CHECKS = ("thm2.7", "thm2.8", "thm2.9", "cor3.1a", "cor3.1b", "cor3.1c", "cor3.1d", "cor3.1e",
          "kato", "expbound", "lem4.1", "cor4.3")
# checks that convolve with the dual kernel and therefore need an integrable one
DUAL_CHECKS = ("thm2.9", "cor3.1a", "cor3.1b", "cor3.1e", "expbound", "cor4.3")

DEFAULTS = {
    "out": "out",
    "seed": 0,
    "threads": 1,
    "checks": [],
    "times": [],
    "sweep": [],
    "grid": {"x_min": -5.0, "x_max": 5.0, "n": 1000},
    "problem": {
        "T": 0.5,
        "flux": {"kind": "burgers"},
        "phi": {"kind": "identity"},
        "operator": {"kind": "laplacian"},
        "u0": {"kind": "bump_over_constant", "base": 0.2, "amp": 0.5},
        "v0": {"kind": "constant", "value": 0.2},
    },
    "balls": [{"x0": 0.0, "radius": 1.0}],
    "dual": {"half_width": 6.0, "snapshots": 101, "bump_center": 0.0, "bump_radius": 0.5,
             "delta": 0.1, "epsilon": 0.1, "tilde_delta": 0.0},
    "kato": {"count": 20},
}

_HEADLINE_PROBLEM = {
    "T": 0.5,
    "flux": {"kind": "burgers"},
    "phi": {"kind": "stefan", "a": 0.2, "b": 0.5},
    "operator": {"kind": "tempered", "alpha": 1.0, "lambda": 2.0},
    "exp_rate": 1.0,
    "u0": {"kind": "bump_over_constant", "base": 0.3, "amp": 0.5, "center": 0.0, "radius": 0.5},
    "v0": {"kind": "bump_over_constant", "base": 0.3, "amp": 0.5, "center": 0.3, "radius": 0.5},
}

PRESETS = {
    "finite-speed-burgers": {
        "checks": ["thm2.7", "cor3.1d"],
        "times": [0.5],
        "sweep": [1000, 2000, 4000],
        "problem": {"phi": {"kind": "zero"}, "operator": {"kind": "laplacian"}},
    },
    "linear-duhamel-cauchy": {
        "checks": ["thm2.8"],
        "times": [0.5],
        "grid": {"n": 2000},
        "sweep": [1000, 2000],
        "problem": {"phi": {"kind": "identity"}, "operator": {"kind": "stable", "alpha": 1.0}},
        "kernel": {"alpha": 1.0, "t": 0.5},
    },
    "linear-duhamel-heat": {
        "checks": ["thm2.8"],
        "times": [0.5],
        "grid": {"n": 2000},
        "problem": {"phi": {"kind": "identity"}, "operator": {"kind": "laplacian"}},
        "kernel": {"alpha": 2.0, "t": 0.5},
    },
    "stefan-tempered-headline": {
        "checks": ["thm2.9", "kato", "cor3.1a", "cor3.1b", "cor3.1c", "cor3.1d", "cor3.1e", "expbound"],
        "times": [0.5],
        "sweep": [1000, 2000],
        "problem": _HEADLINE_PROBLEM,
    },
    "stefan-local-headline": {
        "checks": ["thm2.9", "kato"],
        "times": [0.5],
        "sweep": [1000, 2000],
        "problem": {**_HEADLINE_PROBLEM, "operator": {"kind": "laplacian"}},
    },
    "burgers-fractional": {
        "checks": ["thm2.8", "cor3.1d", "lem4.1"],
        "times": [0.5],
        "problem": {"phi": {"kind": "identity"}, "operator": {"kind": "stable", "alpha": 1.5}},
        "kernel": {"alpha": 1.5, "t": 0.5},
    },
}

_SCHEMA = {
    "preset": str, "out": str, "seed": int, "threads": int, "checks": list, "times": list, "sweep": list,
    "grid": {"x_min": float, "x_max": float, "n": int, "split_r": float},
    "problem": {
        "T": float, "flux": dict, "phi": dict, "operator": dict, "exp_rate": float,
        "u0": dict, "v0": dict, "source_u": dict, "source_v": dict,
    },
    "balls": list,
    "dual": {"half_width": float, "snapshots": int, "bump_center": float, "bump_radius": float,
             "delta": float, "epsilon": float, "tilde_delta": float, "tau": float, "R": float},
    "kato": {"count": int},
    "kernel": {"alpha": float, "t": float},
}


@dataclass(frozen=True)
class Issue:
    field: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        at = f" (line {self.line})" if self.line is not None else ""
        return f"{self.field}: {self.message}{at}"


@dataclass(frozen=True)
class Ball:
    x0: float
    radius: float


@dataclass(frozen=True)
class DualParams:
    half_width: float
    snapshots: int
    bump_center: float
    bump_radius: float
    delta: float
    epsilon: float
    tilde_delta: float
    tau: float | None
    R: float | None


@dataclass(frozen=True, eq=False)
class RunConfig:
    name: str
    pair: ScenarioPair
    x_min: float
    x_max: float
    n: int
    split_r: float | None
    times: tuple[float, ...]
    balls: tuple[Ball, ...]
    checks: tuple[str, ...]
    dual: DualParams
    exp_rate: float | None
    kato_count: int
    kernel: dict | None
    sweep_n: tuple[int, ...]
    out: str
    seed: int
    threads: int
    echo: dict

    @property
    def grid(self) -> Grid:
        return Grid(self.x_min, self.x_max, self.n)

    @property
    def T(self) -> float:
        return self.pair.problem_u.T

    @property
    def op(self) -> OperatorKind:
        return self.pair.problem_u.op

    def with_n(self, n: int) -> "RunConfig":
        echo = copy.deepcopy(self.echo)
        echo["grid"]["n"] = n
        return build_config(echo)


# --- parsing ---------------------------------------------------------------------

_HEADER = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-\"\.]+)\s*=")


def key_lines(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line number of its first assignment or table header."""
    out: dict[str, int] = {}
    prefix = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(raw)
        if m:
            prefix = m.group(1).replace('"', "").replace(" ", "")
            out.setdefault(prefix, i)
            continue
        m = _KEY.match(raw)
        if m:
            key = m.group(1).replace('"', "")
            out.setdefault(f"{prefix}.{key}" if prefix else key, i)
    return out


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        # tables tagged with a different kind replace the old one instead of merging into it
        if isinstance(v, dict) and isinstance(out.get(k), dict) and v.get("kind", out[k].get("kind")) == out[k].get("kind"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def merged_with_preset(raw: dict) -> dict:
    """DEFAULTS < preset < raw, with unknown presets left for validation to report."""
    preset = raw.get("preset")
    merged = _merge(DEFAULTS, PRESETS.get(preset, {}) if isinstance(preset, str) else {})
    return _merge(merged, raw)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    return parse_text(text, base_dir=path.parent)


def parse_text(text: str, base_dir=".") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"\s*\(at line (\d+)[^)]*\)", str(exc))
        msg = str(exc).replace(m.group(0), "") if m else str(exc)
        raise ParseError(msg, int(m.group(1)) if m else None) from exc
    return build_config(raw, key_lines(text), base_dir)


def from_preset(name: str, **overrides) -> RunConfig:
    return build_config({"preset": name, **overrides})


# --- validation ---------------------------------------------------------------------


class _Collector:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines
        self.issues: list[Issue] = []

    def add(self, field: str, message: str) -> None:
        line = None
        key = field
        while key:
            if key in self.lines:
                line = self.lines[key]
                break
            key = key.rpartition(".")[0]
        self.issues.append(Issue(field, message, line))


def _check_types(d: dict, schema: dict, prefix: str, col: _Collector) -> None:
    for k, v in d.items():
        name = f"{prefix}{k}"
        if k not in schema:
            col.add(name, "unknown field")
            continue
        want = schema[k]
        if isinstance(want, dict):
            if not isinstance(v, dict):
                col.add(name, "expected a table")
            else:
                _check_types(v, want, name + ".", col)
        elif want is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                col.add(name, "expected a number")
        elif want is int:
            if isinstance(v, bool) or not isinstance(v, int):
                col.add(name, "expected an integer")
        elif not isinstance(v, want):
            col.add(name, f"expected {want.__name__}")


def _num(d: dict, key: str, field: str, col: _Collector, default=None):
    v = d.get(key, default)
    if v is None:
        col.add(f"{field}.{key}", "missing")
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        col.add(f"{field}.{key}", "expected a number")
        return None
    return float(v)


def _flux(spec, col: _Collector):
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind == "burgers":
        return FluxSpec.burgers()
    if kind == "linear":
        a = _num(spec, "a", "problem.flux", col, 1.0)
        return None if a is None else FluxSpec.linear(a)
    col.add("problem.flux.kind", f"unknown flux {kind!r}")
    return None


def _phi(spec, col: _Collector):
    kind = spec.get("kind")
    if kind == "identity":
        return PhiSpec.identity()
    if kind == "zero":
        return PhiSpec.zero()
    if kind == "power":
        m = _num(spec, "m", "problem.phi", col)
        if m is not None and m < 1.0:
            col.add("problem.phi.m", "power needs m >= 1")
            return None
        return None if m is None else PhiSpec.power(m)
    if kind == "stefan":
        a, b = _num(spec, "a", "problem.phi", col), _num(spec, "b", "problem.phi", col)
        if a is None or b is None:
            return None
        if a > b:
            col.add("problem.phi", "plateau needs a <= b")
            return None
        return PhiSpec.stefan(a, b)
    col.add("problem.phi.kind", f"unknown phi {kind!r}")
    return None


def _operator(spec, col: _Collector, base_dir):
    kind = spec.get("kind")
    if kind == "laplacian":
        return OperatorKind.laplacian()
    if kind in ("stable", "tempered"):
        alpha = _num(spec, "alpha", "problem.operator", col)
        if alpha is None:
            return None
        if not 0.0 < alpha <= 2.0:
            col.add("problem.operator.alpha", "alpha out of (0,2]")
            return None
        if alpha == 2.0:
            col.add("problem.operator.alpha", "alpha = 2 is the Laplacian; use kind = \"laplacian\"")
            return None
        if kind == "tempered":
            lam = _num(spec, "lambda", "problem.operator", col)
            if lam is None:
                return None
            if lam <= 0.0:
                col.add("problem.operator.lambda", "tempering rate must be positive")
                return None
    elif kind not in ("atomic", "table"):
        col.add("problem.operator.kind", f"unknown operator {kind!r}")
        return None
    try:
        return OperatorKind.levy(levy.measure_from_config(spec, base_dir))
    except (KeyError, ValueError, TypeError, OSError) as exc:
        col.add("problem.operator", f"invalid measure: {exc}")
        return None


def _initial(spec, field: str, col: _Collector):
    kind = spec.get("kind")
    if kind == "constant":
        c = _num(spec, "value", field, col)
        return None if c is None else InitialData.constant(c)
    if kind == "bump_over_constant":
        vals = [_num(spec, k, field, col, d) for k, d in
                (("base", None), ("amp", None), ("center", 0.0), ("radius", 0.5))]
        if None in vals:
            return None
        if vals[3] <= 0.0:
            col.add(f"{field}.radius", "radius must be positive")
            return None
        return InitialData.bump_over_constant(*vals)
    if kind == "riemann":
        vals = [_num(spec, k, field, col, d) for k, d in (("left", None), ("right", None), ("x0", 0.0))]
        return None if None in vals else InitialData.riemann(*vals)
    col.add(f"{field}.kind", f"unknown initial datum {kind!r}")
    return None


def _source(spec, field: str, T: float, col: _Collector):
    if spec is None:
        return Source.zero()
    kind = spec.get("kind")
    if kind == "zero":
        return Source.zero()
    if kind == "constant":
        c = _num(spec, "c", field, col)
        return None if c is None else Source.constant(c, T)
    col.add(f"{field}.kind", f"unknown source {kind!r}")
    return None


def _is_fractional_laplacian(op: OperatorKind) -> bool:
    if op.is_local:
        return True
    mu = op.measure
    return isinstance(mu, levy.Stable) and math.isclose(
        mu.c, levy.fractional_laplacian_constant(mu.alpha), rel_tol=1e-12)


def build_config(raw: dict, lines: dict[str, int] | None = None, base_dir=".") -> RunConfig:
    """Merge with the preset and validate everything, raising one ValidationError listing all issues."""
    col = _Collector(lines or {})
    preset = raw.get("preset")
    if preset is not None and preset not in PRESETS:
        col.add("preset", f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}")
    _check_types(raw, _SCHEMA, "", col)
    if col.issues:
        raise ValidationError(col.issues)
    cfg = merged_with_preset(raw)
    prob = cfg["problem"]

    T = _num(prob, "T", "problem", col)
    if T is not None and T <= 0.0:
        col.add("problem.T", "horizon must be positive")
        T = None
    g = cfg["grid"]
    x_min, x_max = _num(g, "x_min", "grid", col), _num(g, "x_max", "grid", col)
    n = g.get("n")
    if x_min is not None and x_max is not None and x_min >= x_max:
        col.add("grid", "need x_min < x_max")
    if not isinstance(n, int) or n < 10:
        col.add("grid.n", "need an integer n >= 10")
        n = None
    split_r = g.get("split_r")
    if split_r is not None and x_min is not None and x_max is not None and n is not None:
        if split_r < (x_max - x_min) / n:
            col.add("grid.split_r", "split radius below one cell width")

    flux = _flux(prob.get("flux", {}), col)
    phi = _phi(prob.get("phi", {}), col)
    op = _operator(prob.get("operator", {}), col, base_dir)
    u0 = _initial(prob.get("u0", {}), "problem.u0", col)
    v0 = _initial(prob.get("v0", {}), "problem.v0", col)
    Tv = T if T is not None else 1.0
    su = _source(prob.get("source_u"), "problem.source_u", Tv, col)
    sv = _source(prob.get("source_v"), "problem.source_v", Tv, col)
    exp_rate = prob.get("exp_rate")
    exp_rate = None if exp_rate is None else float(exp_rate)
    if exp_rate is not None and exp_rate <= 0.0:
        col.add("problem.exp_rate", "exponential rate must be positive")

    checks = cfg["checks"]
    for c in checks:
        if c not in CHECKS:
            col.add("checks", f"unknown check {c!r}; known: {', '.join(CHECKS)}")
    if len(set(checks)) != len(checks):
        col.add("checks", "duplicate entries")

    times = cfg["times"]
    if not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in times):
        col.add("times", "expected numbers")
        times = []
    times = [float(t) for t in times] or ([T] if T is not None else [])
    if T is not None:
        for t in times:
            if not 0.0 < t <= T:
                col.add("times", f"time {t} outside (0, T]")

    balls = []
    for i, b in enumerate(cfg["balls"]):
        if not isinstance(b, dict) or set(b) - {"x0", "radius"}:
            col.add(f"balls.{i}", "expected a table with x0 and radius")
            continue
        x0, r = _num(b, "x0", f"balls.{i}", col), _num(b, "radius", f"balls.{i}", col)
        if x0 is None or r is None:
            continue
        if r <= 0.0:
            col.add(f"balls.{i}.radius", "radius must be positive")
            continue
        balls.append(Ball(x0, r))
    if not balls and any(c in checks for c in ("thm2.7", "thm2.8", "thm2.9", "cor3.1a", "cor3.1b", "cor3.1e")):
        col.add("balls", "ball checks need at least one ball")

    sweep = cfg["sweep"]
    if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 10 for s in sweep):
        col.add("sweep", "expected integers >= 10")
        sweep = []
    elif any(a >= b for a, b in zip(sweep, sweep[1:])):
        col.add("sweep", "grid sizes must be ascending")

    d = cfg["dual"]
    dual = DualParams(
        float(d.get("half_width", 6.0)), int(d.get("snapshots", 101)), float(d.get("bump_center", 0.0)),
        float(d.get("bump_radius", 0.5)), float(d.get("delta", 0.1)), float(d.get("epsilon", 0.1)),
        float(d.get("tilde_delta", 0.0)),
        None if d.get("tau") is None else float(d["tau"]), None if d.get("R") is None else float(d["R"]),
    )
    if dual.snapshots < 2:
        col.add("dual.snapshots", "need at least two snapshots")
    for name in ("half_width", "bump_radius", "delta", "epsilon"):
        if getattr(dual, name) <= 0.0:
            col.add(f"dual.{name}", "must be positive")
    if dual.tilde_delta < 0.0:
        col.add("dual.tilde_delta", "must be nonnegative")
    if dual.tau is not None and T is not None and not 0.0 < dual.tau <= T:
        col.add("dual.tau", "tau outside (0, T]")

    kernel = cfg.get("kernel")
    if kernel is not None:
        a = _num(kernel, "alpha", "kernel", col)
        t = _num(kernel, "t", "kernel", col)
        if a is not None and not 0.0 < a <= 2.0:
            col.add("kernel.alpha", "alpha out of (0,2]")
        if t is not None and t <= 0.0:
            col.add("kernel.t", "time must be positive")
        kernel = {"alpha": a, "t": t}

    kato_count = cfg["kato"].get("count", 20)
    if not isinstance(kato_count, int) or kato_count < 1:
        col.add("kato.count", "need a positive integer")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        col.add("seed", "need a nonnegative integer")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        col.add("threads", "need a positive integer")

    # checks that depend on the assembled problem
    if phi is not None and "thm2.7" in checks and phi.name != "zero":
        col.add("checks", "thm2.7 is the pure transport case and needs phi kind = \"zero\"")
    if "thm2.8" in checks:
        if phi is not None and phi.name != "identity":
            col.add("checks", "thm2.8 needs phi kind = \"identity\"")
        if op is not None and not _is_fractional_laplacian(op):
            col.add("checks", "thm2.8 needs the Laplacian or a fractional Laplacian (stable without c)")
    if op is not None and op.is_local and "lem4.1" in checks:
        col.add("checks", "lem4.1 bounds the jump parts and needs a non-local operator")
    needs_dual = [c for c in checks if c in DUAL_CHECKS]
    if op is not None and not op.is_local and needs_dual:
        if exp_rate is None:
            col.add("problem.exp_rate", f"{', '.join(needs_dual)} need a certified exponential rate for the measure")
        else:
            try:
                levy.assert_tempered(op.effective_measure(), exp_rate)
            except Divergent:
                col.add("problem.operator",
                        f"{', '.join(needs_dual)} need a tempered measure: its exponential moment at rate "
                        f"{exp_rate} diverges")

    pair = None
    if None not in (T, x_min, x_max, n, flux, phi, op, u0, v0, su, sv) and x_min < x_max:
        pu = ProblemSpec(flux, phi, op, u0, T, (x_min, x_max), su)
        pv = ProblemSpec(flux, phi, op, v0, T, (x_min, x_max), sv)
        pair = ScenarioPair(pu, pv, f"{u0.label} vs {v0.label}")
        grid = Grid(x_min, x_max, n)
        gu, gv = u0.on(grid), v0.on(grid)
        lo = min(pu.data_range(gu)[0], pv.data_range(gv)[0])
        hi = max(pu.data_range(gu)[1], pv.data_range(gv)[1])
        L_f = flux.lipschitz_on(lo, hi)
        if not (np.all(np.isfinite(gu.values)) and np.all(np.isfinite(gv.values))):
            col.add("problem", "initial data are not finite")
        dual_reach = 1.0 if needs_dual else 0.0
        for i, b in enumerate(balls):
            for t in times:
                outer = b.radius + dual_reach + L_f * t
                if b.x0 - outer < x_min or b.x0 + outer > x_max:
                    col.add(f"balls.{i}", f"enlarged ball x0 +- {outer:.6g} at t = {t} exceeds the domain")
        if "cor4.3" in checks and dual.R is not None and dual.R <= L_f * T + 1.0:
            col.add("dual.R", f"cutoff radius R must exceed L_f*T + 1 = {L_f * T + 1.0:.6g}")

    if col.issues:
        raise ValidationError(col.issues)

    echo = copy.deepcopy(cfg)
    echo["times"] = times
    echo.pop("preset", None)
    if preset is not None:
        echo = {"preset": preset, **echo}
    return RunConfig(
        name=preset or "custom", pair=pair, x_min=x_min, x_max=x_max, n=n,
        split_r=None if split_r is None else float(split_r), times=tuple(times), balls=tuple(balls),
        checks=tuple(checks), dual=dual, exp_rate=exp_rate, kato_count=kato_count, kernel=kernel,
        sweep_n=tuple(sweep), out=cfg["out"], seed=cfg["seed"], threads=cfg["threads"],
        echo=echo,
    )
