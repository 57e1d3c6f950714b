"""Explicit monotone finite-volume scheme for u_t + f(u)_x = L phi(u) + g.

Convection uses the Engquist-Osher flux, diffusion the discrete operator of
`grid` applied to phi(u) with upwinded drift.  Under the CFL bound the update
is nondecreasing in every stencil value, so comparison, the maximum principle
and (for phi = 0) total-variation decay hold exactly on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid as gops
from .errors import CflViolation, DegenerateProblem, TestFunctionTouchesBoundary, TimeOutOfRange
from .grid import Grid, GridFunction, OperatorWeights
from .levy import OperatorKind

SAFETY = 0.9


def _piecewise_linear(xs, ys, u, left_slope, right_slope):
    u = np.asarray(u, dtype=float)
    out = np.interp(u, xs, ys)
    out = np.where(u < xs[0], ys[0] + left_slope * (u - xs[0]), out)
    return np.where(u > xs[-1], ys[-1] + right_slope * (u - xs[-1]), out)


@dataclass(frozen=True)
class FluxSpec:
    """Burgers f(u) = u^2/2, linear f(u) = a u, or a piecewise-linear table."""

    name: str
    a: float = 0.0
    nodes: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    @classmethod
    def burgers(cls) -> "FluxSpec":
        return cls("burgers")

    @classmethod
    def linear(cls, a: float) -> "FluxSpec":
        return cls("linear", a=float(a))

    @classmethod
    def tabulated(cls, nodes, values) -> "FluxSpec":
        nodes, values = tuple(map(float, nodes)), tuple(map(float, values))
        if len(nodes) < 2 or len(nodes) != len(values) or any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("tabulated flux needs >= 2 strictly increasing nodes")
        return cls("tabulated", nodes=nodes, values=values)

    @classmethod
    def sampled(cls, fn: Callable, lo: float, hi: float, n: int = 4097) -> "FluxSpec":
        xs = np.linspace(lo, hi, n)
        return cls.tabulated(xs, fn(xs))

    def _tables(self):
        xs, ys = np.array(self.nodes), np.array(self.values)
        slopes = np.diff(ys) / np.diff(xs)
        up = np.concatenate([[0.0], np.cumsum(np.maximum(slopes, 0.0) * np.diff(xs))])
        down = np.concatenate([[0.0], np.cumsum(np.minimum(slopes, 0.0) * np.diff(xs))])
        return xs, ys, slopes, up, down

    def __call__(self, u):
        if self.name == "burgers":
            return 0.5 * np.square(u)
        if self.name == "linear":
            return self.a * np.asarray(u, dtype=float)
        xs, ys, s, _, _ = self._tables()
        return _piecewise_linear(xs, ys, u, s[0], s[-1])

    def eo(self, a, b):
        """Engquist-Osher numerical flux F(a, b)."""
        if self.name == "burgers":
            return 0.5 * np.square(np.maximum(a, 0.0)) + 0.5 * np.square(np.minimum(b, 0.0))
        if self.name == "linear":
            return max(self.a, 0.0) * np.asarray(a, dtype=float) + min(self.a, 0.0) * np.asarray(b, dtype=float)
        xs, ys, s, up, down = self._tables()
        pos = lambda u: _piecewise_linear(xs, up, u, max(s[0], 0.0), max(s[-1], 0.0))
        neg = lambda u: _piecewise_linear(xs, down, u, min(s[0], 0.0), min(s[-1], 0.0))
        return self(0.0) + pos(a) - pos(0.0) + neg(b) - neg(0.0)

    def lipschitz_on(self, lo: float, hi: float) -> float:
        if self.name == "burgers":
            return max(abs(lo), abs(hi))
        if self.name == "linear":
            return abs(self.a)
        xs, _, s, _, _ = self._tables()
        # segment k covers [xs[k], xs[k+1]]; the end slopes extend outward
        seg_lo = np.concatenate([[-np.inf], xs[1:-1]])
        seg_hi = np.concatenate([xs[1:-1], [np.inf]])
        hit = (seg_hi >= lo) & (seg_lo <= hi)
        return float(np.max(np.abs(s[hit])))

    def describe(self) -> dict:
        out = {"name": self.name}
        if self.name == "linear":
            out["a"] = self.a
        if self.name == "tabulated":
            out["n_nodes"] = len(self.nodes)
        return out


def eo_flux(a, b, flux: FluxSpec):
    """Engquist-Osher flux f(0) + int_0^a max(f',0) + int_0^b min(f',0)."""
    return flux.eo(a, b)


@dataclass(frozen=True)
class PhiSpec:
    """Nondecreasing phi with phi(0) = 0: identity, zero, power |u|^(m-1) u, or a Stefan plateau on [a, b]."""

    name: str
    m: float = 1.0
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.name == "power" and self.m < 1.0:
            raise ValueError("power nonlinearity needs m >= 1 to be locally Lipschitz")
        if self.name == "stefan" and self.b < self.a:
            raise ValueError("stefan plateau needs a <= b")

    @classmethod
    def identity(cls) -> "PhiSpec":
        return cls("identity")

    @classmethod
    def zero(cls) -> "PhiSpec":
        return cls("zero")

    @classmethod
    def power(cls, m: float) -> "PhiSpec":
        return cls("power", m=float(m))

    @classmethod
    def stefan(cls, a: float, b: float) -> "PhiSpec":
        return cls("stefan", a=float(a), b=float(b))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.name == "identity":
            return u.copy()
        if self.name == "zero":
            return np.zeros_like(u)
        if self.name == "power":
            return np.sign(u) * np.abs(u) ** self.m
        return u - np.clip(u, self.a, self.b) + min(max(0.0, self.a), self.b)

    def lipschitz_on(self, lo: float, hi: float) -> float:
        if self.name == "identity":
            return 1.0
        if self.name == "zero":
            return 0.0
        if self.name == "power":
            return self.m * max(abs(lo), abs(hi)) ** (self.m - 1.0)
        return 1.0 if (lo < self.a or hi > self.b) else 0.0

    def describe(self) -> dict:
        out = {"name": self.name}
        if self.name == "power":
            out["m"] = self.m
        if self.name == "stefan":
            out.update(a=self.a, b=self.b)
        return out


def _zero_source(x, t):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Source:
    """Source g(x, t) with certified bounds on its time-integrated sup and BV norms."""

    fn: Callable = _zero_source
    linf_integral: float = 0.0
    bv_integral: float = 0.0
    label: str = "0"

    def __call__(self, x, t):
        return np.asarray(self.fn(x, t), dtype=float) * np.ones_like(np.asarray(x, dtype=float))

    @property
    def is_zero(self) -> bool:
        return self.fn is _zero_source

    @classmethod
    def zero(cls) -> "Source":
        return cls()

    @classmethod
    def constant(cls, c: float, T: float) -> "Source":
        return cls(lambda x, t: np.full_like(np.asarray(x, dtype=float), c), abs(c) * T, 0.0, f"{c!r}")

    def minus(self, c: float, T: float) -> "Source":
        """g - c, used to turn a solution into a strict subsolution (c >= 0)."""
        fn = self.fn
        return Source(lambda x, t: fn(x, t) - c, self.linf_integral + abs(c) * T, self.bv_integral, f"{self.label}-{c!r}")


def standard_bump(s):
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero outside; peak value 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class InitialData:
    fn: Callable
    far_left: float = 0.0
    far_right: float = 0.0
    label: str = ""

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self.fn(grid.x), self.far_left, self.far_right)

    @classmethod
    def constant(cls, c: float) -> "InitialData":
        return cls(lambda x: np.full_like(x, c), c, c, f"const({c!r})")

    @classmethod
    def bump_over_constant(cls, base: float, amp: float, center: float = 0.0, radius: float = 0.5) -> "InitialData":
        return cls(
            lambda x: base + amp * standard_bump((x - center) / radius), base, base,
            f"bump(base={base!r}, amp={amp!r}, center={center!r}, radius={radius!r})",
        )

    @classmethod
    def riemann(cls, left: float, right: float, x0: float = 0.0) -> "InitialData":
        return cls(lambda x: np.where(x < x0, left, right), left, right, f"riemann({left!r}, {right!r}, {x0!r})")

    @classmethod
    def from_grid(cls, f: GridFunction) -> "InitialData":
        vals = np.array(f.values)
        return cls(lambda x: vals.copy(), f.far_left, f.far_right, "grid")


@dataclass(frozen=True)
class ProblemSpec:
    flux: FluxSpec
    phi: PhiSpec
    op: OperatorKind
    initial: InitialData
    T: float
    domain: tuple[float, float]
    source: Source = field(default_factory=Source)

    def data_range(self, u0: GridFunction) -> tuple[float, float]:
        """Interval containing every discrete value up to time T (maximum principle)."""
        lo = min(float(np.min(u0.values)), u0.far_left, u0.far_right)
        hi = max(float(np.max(u0.values)), u0.far_left, u0.far_right)
        G = self.source.linf_integral
        return lo - G, hi + G


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored time levels (every step when recorded that way) of one discrete solution."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    far_left: np.ndarray
    far_right: np.ndarray
    dt_used: float
    cfl_report: dict
    every_step: bool = False

    @property
    def snapshots(self) -> list[tuple[float, GridFunction]]:
        return [(float(t), self.level(j)) for j, t in enumerate(self.times)]

    def level(self, j: int) -> GridFunction:
        return GridFunction(self.grid, self.values[j], self.far_left[j], self.far_right[j])

    def index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-12 * max(1.0, abs(t)):
            raise TimeOutOfRange(f"time {t} is not a stored level")
        return j

    def at(self, t: float) -> GridFunction:
        return self.level(self.index(t))

    def manifest(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "dt_used": self.dt_used,
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n": self.grid.n},
            "cfl": self.cfl_report,
        }


@dataclass(frozen=True)
class CflInfo:
    dt: float
    L_f: float
    L_phi: float
    data_range: tuple[float, float]
    denominator: float
    safety: float


def cfl_bound(L_f: float, L_phi: float, weights: OperatorWeights, h: float, safety: float = SAFETY) -> float:
    denom = 2.0 * L_f / h + L_phi * (
        2.0 * weights.local_coeff / (h * h) + weights.total_jump_mass + abs(weights.drift) / h
    )
    if denom == 0.0:
        raise DegenerateProblem("no transport and no diffusion on the data range")
    return safety / denom


def cfl_info(problem: ProblemSpec, weights: OperatorWeights, u0: GridFunction, safety: float = SAFETY) -> CflInfo:
    lo, hi = problem.data_range(u0)
    L_f = problem.flux.lipschitz_on(lo, hi)
    L_phi = problem.phi.lipschitz_on(lo, hi)
    h = u0.grid.h
    denom = 2.0 * L_f / h + L_phi * (
        2.0 * weights.local_coeff / (h * h) + weights.total_jump_mass + abs(weights.drift) / h
    )
    dt = problem.T if denom == 0.0 else safety / denom
    return CflInfo(dt, L_f, L_phi, (lo, hi), denom, safety)


def cfl_dt(problem: ProblemSpec, weights: OperatorWeights, h: float, safety: float = SAFETY) -> float:
    """Largest monotone time step on the problem's certified data range."""
    u0 = problem.initial.on(Grid(problem.domain[0], problem.domain[1], int(round((problem.domain[1] - problem.domain[0]) / h))))
    lo, hi = problem.data_range(u0)
    return cfl_bound(problem.flux.lipschitz_on(lo, hi), problem.phi.lipschitz_on(lo, hi), weights, h, safety)


class _Stepper:
    """Array-level update for one problem; `step` wraps it for GridFunctions."""

    def __init__(self, problem: ProblemSpec, weights: OperatorWeights, grid: Grid):
        self.p = problem
        self.w = weights
        self.h = grid.h
        self.x = grid.x
        self.ends = np.array([grid.x_min, grid.x_max])
        self.diffuse = problem.phi.name != "zero"
        self.src = not problem.source.is_zero

    def advance(self, u, fl, fr, t, dt):
        ext = np.concatenate([[fl], u, [fr]])
        F = self.p.flux.eo(ext[:-1], ext[1:])
        new = u - (dt / self.h) * (F[1:] - F[:-1])
        if self.diffuse:
            phi = self.p.phi
            pfl, pfr = phi(np.array([fl, fr]))
            new = new + dt * gops.apply_arrays(self.w, phi(u), pfl, pfr, "upwind")
        if self.src:
            new = new + dt * self.p.source(self.x, t)
            ge = self.p.source(self.ends, t)
            fl, fr = fl + dt * ge[0], fr + dt * ge[1]
        return new, fl, fr


def step(
    state: GridFunction, t: float, dt: float, problem: ProblemSpec, weights: OperatorWeights,
    dt_max: float | None = None,
) -> GridFunction:
    """One explicit Euler step of the monotone scheme."""
    if dt_max is not None and dt > dt_max * (1.0 + 1e-12):
        raise CflViolation(f"dt={dt} exceeds the monotone bound {dt_max}")
    new, fl, fr = _Stepper(problem, weights, state.grid).advance(state.values, state.far_left, state.far_right, t, dt)
    return GridFunction(state.grid, new, fl, fr)


def _targets(T: float, snapshot_times) -> np.ndarray:
    ts = {0.0, float(T)} if snapshot_times is None else set(map(float, snapshot_times)) | {0.0, float(T)}
    ts = np.array(sorted(ts))
    if ts[0] < 0.0 or ts[-1] > T * (1 + 1e-14):
        raise TimeOutOfRange("snapshot times must lie in [0, T]")
    return ts


def _march(states, problems, weights, dt, targets, every_step):
    """Advance several problems on shared time levels; returns per-problem level lists."""
    grid = states[0].grid
    steppers = [_Stepper(p, weights, grid) for p in problems]
    cur = [(s.values, s.far_left, s.far_right) for s in states]
    t = 0.0
    levels = [[s] for s in states]
    times = [0.0]
    for target in targets[1:]:
        while t < target:
            remaining = target - t
            if remaining <= dt * (1.0 + 1e-12):
                tau, t_next = remaining, float(target)
            else:
                tau, t_next = dt, t + dt
            cur = [st.advance(u, fl, fr, t, tau) for st, (u, fl, fr) in zip(steppers, cur)]
            t = t_next
            if every_step or t == target:
                for lv, (u, fl, fr) in zip(levels, cur):
                    lv.append(GridFunction(grid, u, fl, fr))
                times.append(t)
    return np.array(times), levels


def _trajectory(grid, times, level_list, dt, report, every_step):
    return Trajectory(
        grid, times,
        np.array([lv.values for lv in level_list]),
        np.array([lv.far_left for lv in level_list]),
        np.array([lv.far_right for lv in level_list]),
        dt, report, every_step,
    )


def _report(problem, weights, info, steps_hint):
    lo, hi = info.data_range
    phi_sup = float(np.max(np.abs(problem.phi(np.array([lo, hi])))))
    return {
        "L_f": info.L_f,
        "L_phi": info.L_phi,
        "data_range": [lo, hi],
        "cfl_denominator": info.denominator,
        "safety": info.safety,
        "dt": info.dt,
        "weights": weights.summary(),
        "leakage_bound": weights.truncated_mass * problem.T * phi_sup,
        "leakage_formula": "truncated_mass * T * max|phi| on data range",
    }


def solve(
    problem: ProblemSpec, n: int, split_r: float | None = None, snapshot_times=None,
    every_step: bool = False, safety: float = SAFETY,
) -> Trajectory:
    grid = Grid(problem.domain[0], problem.domain[1], n)
    weights = gops.discretize(problem.op, grid, split_r)
    u0 = problem.initial.on(grid)
    info = cfl_info(problem, weights, u0, safety)
    targets = _targets(problem.T, snapshot_times)
    times, (levels,) = _march([u0], [problem], weights, info.dt, targets, every_step)
    return _trajectory(grid, times, levels, info.dt, _report(problem, weights, info, None), every_step)


@dataclass(frozen=True)
class ScenarioPair:
    """Two problems sharing flux, phi, operator, domain and horizon; `problem_v`'s source plays h."""

    problem_u: ProblemSpec
    problem_v: ProblemSpec
    relationship: str = ""

    def __post_init__(self):
        u, v = self.problem_u, self.problem_v
        if (u.flux, u.phi, u.op, u.T, tuple(u.domain)) != (v.flux, v.phi, v.op, v.T, tuple(v.domain)):
            raise ValueError("pair members must share flux, phi, operator, horizon and domain")

    def swapped(self) -> "ScenarioPair":
        return ScenarioPair(self.problem_v, self.problem_u, self.relationship + " (swapped)")


@dataclass(frozen=True, eq=False)
class PairSolution:
    pair: ScenarioPair
    u: Trajectory
    v: Trajectory
    weights: OperatorWeights
    L_f: float
    L_phi: float

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def dt(self) -> float:
        return self.u.dt_used


def solve_pair(
    pair: ScenarioPair, n: int, split_r: float | None = None, snapshot_times=None,
    every_step: bool = False, safety: float = SAFETY,
) -> PairSolution:
    """Solve both members on identical time levels with the smaller of the two CFL steps."""
    pu, pv = pair.problem_u, pair.problem_v
    grid = Grid(pu.domain[0], pu.domain[1], n)
    weights = gops.discretize(pu.op, grid, split_r)
    u0, v0 = pu.initial.on(grid), pv.initial.on(grid)
    lo_u, hi_u = pu.data_range(u0)
    lo_v, hi_v = pv.data_range(v0)
    joint = ProblemSpec(pu.flux, pu.phi, pu.op, pu.initial, pu.T, pu.domain,
                        Source(linf_integral=max(pu.source.linf_integral, pv.source.linf_integral)))
    lo, hi = min(lo_u, lo_v), max(hi_u, hi_v)
    span = GridFunction(grid, np.array([lo] + [hi] * (n - 1)) if n > 1 else np.array([lo]), lo, hi)
    info = cfl_info(ProblemSpec(joint.flux, joint.phi, joint.op, joint.initial, joint.T, joint.domain), weights, span, safety)
    targets = _targets(pu.T, snapshot_times)
    times, (lu, lv) = _march([u0, v0], [pu, pv], weights, info.dt, targets, every_step)
    report = _report(joint, weights, info, None)
    return PairSolution(
        pair,
        _trajectory(grid, times, lu, info.dt, report, every_step),
        _trajectory(grid, times, lv, info.dt, report, every_step),
        weights, info.L_f, info.L_phi,
    )


@dataclass(frozen=True)
class SpaceTimeBump:
    """psi(x, t) = amplitude * b((x - xc)/xr) * b((t - tc)/tr) with b the standard bump."""

    x_center: float
    x_radius: float
    t_center: float
    t_radius: float
    amplitude: float = 1.0

    def __call__(self, x, t):
        return self.amplitude * standard_bump((np.asarray(x) - self.x_center) / self.x_radius) * float(
            standard_bump(np.array([(t - self.t_center) / self.t_radius]))[0]
        )

    def derivative_bounds(self) -> dict:
        b1, b2 = _BUMP_D1, _BUMP_D2
        a, xr, tr = self.amplitude, self.x_radius, self.t_radius
        return {"psi": a, "psi_x": a * b1 / xr, "psi_t": a * b1 / tr, "psi_xx": a * b2 / xr**2, "psi_tt": a * b2 / tr**2}

    def check_inside(self, grid: Grid, T: float) -> None:
        if (self.x_center - self.x_radius <= grid.x_min or self.x_center + self.x_radius >= grid.x_max
                or self.t_center - self.t_radius <= 0.0 or self.t_center + self.t_radius >= T):
            raise TestFunctionTouchesBoundary("test function support must lie inside the domain and (0, T)")


def _bump_derivative_maxima():
    s = np.linspace(-1 + 1e-9, 1 - 1e-9, 200001)
    b = standard_bump(s)
    d1 = b * (-2.0 * s / (1.0 - s * s) ** 2)
    d2 = np.gradient(d1, s)
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))


_BUMP_D1, _BUMP_D2 = _bump_derivative_maxima()


@dataclass(frozen=True)
class ResidualReport:
    total: float
    time_term: float
    flux_term: float
    diffusion_term: float
    source_term: float
    tolerance: float
    constant: float
    h: float
    dt: float

    @property
    def passed(self) -> bool:
        return self.total >= -self.tolerance


def _kato_terms(flux, phi, weights, grid, times, U, UFL, UFR, V, VFL, VFR, psis, g_plus) -> np.ndarray:
    """Discrete Kato functional with the scheme's own fluxes, in summation-by-parts form.

    The bumps are separable, so all of them are handled in one pass over the
    time levels.  Returns an array (len(psis), 4): time, flux, diffusion and
    source contributions.
    """
    h = grid.h
    x = grid.x
    X = np.stack([p.amplitude * standard_bump((x - p.x_center) / p.x_radius) for p in psis], axis=1)
    dX = np.diff(np.vstack([np.zeros((1, len(psis))), X, np.zeros((1, len(psis)))]), axis=0)
    Tn = np.stack([standard_bump((times - p.t_center) / p.t_radius) for p in psis], axis=1)
    out = np.zeros((len(psis), 4))
    diffuse = phi.name != "zero"
    for n_ in range(len(times) - 1):
        dt = times[n_ + 1] - times[n_]
        jump = Tn[n_ + 1] - Tn[n_]
        if np.any(jump):
            eta_next = np.maximum(U[n_ + 1] - V[n_ + 1], 0.0)
            out[:, 0] += h * (eta_next @ X) * jump
        tw = Tn[n_]
        if not np.any(tw):
            continue
        wv = np.maximum(U[n_], V[n_])
        wl, wr = max(UFL[n_], VFL[n_]), max(UFR[n_], VFR[n_])
        we = np.concatenate([[wl], wv, [wr]])
        ve = np.concatenate([[VFL[n_]], V[n_], [VFR[n_]]])
        Q = flux.eo(we[:-1], we[1:]) - flux.eo(ve[:-1], ve[1:])
        out[:, 1] += dt * (Q @ dX) * tw
        if diffuse:
            pw, pv = phi(we), phi(ve)
            d = pw - pv
            lap = gops.apply_arrays(weights, d[1:-1], d[0], d[-1], "upwind")
            out[:, 2] += dt * h * (lap @ X) * tw
        sg = g_plus(n_, x, times[n_])
        if np.any(sg):
            out[:, 3] += dt * h * (sg @ X) * tw
    return out


def _residual_tolerance(psi: SpaceTimeBump, weights, L_f, L_phi, osc, h, dt, source_sup):
    d = psi.derivative_bounds()
    area = 4.0 * psi.x_radius * psi.t_radius
    op_scale = 2.0 * weights.local_coeff + weights.total_jump_mass + abs(weights.drift)
    C = area * (
        osc * (d["psi_t"] + d["psi_tt"] + L_f * (d["psi_x"] + d["psi_xx"]) + L_phi * op_scale * (d["psi_x"] + d["psi_xx"]))
        + source_sup * (d["psi"] + d["psi_t"] + d["psi_x"])
    )
    return C * (h + dt), C


def entropy_residual(
    traj: Trajectory, k: float, psi: SpaceTimeBump, problem: ProblemSpec, weights: OperatorWeights,
) -> ResidualReport:
    """Discrete entropy inequality against the constant k; the source enters as sgn(u-k)^+ g psi."""
    return entropy_residuals(traj, k, [psi], problem, weights)[0]


def entropy_residuals(traj, k, psis, problem, weights) -> list[ResidualReport]:
    if not traj.every_step:
        raise ValueError("entropy residual needs a trajectory recorded at every step")
    grid = traj.grid
    for psi in psis:
        psi.check_inside(grid, float(traj.times[-1]))
    N = len(traj.times)
    U = traj.values
    K = np.broadcast_to(np.float64(k), U.shape)
    kf = np.full(N, float(k))

    def g_term(n_, x, t):
        if problem.source.is_zero:
            return np.zeros_like(x)
        return (U[n_] > k) * problem.source(x, t)

    terms = _kato_terms(problem.flux, problem.phi, weights, grid, traj.times, U, traj.far_left, traj.far_right,
                        K, kf, kf, psis, g_term)
    lo, hi = traj.cfl_report["data_range"]
    osc = max(hi, k) - min(lo, k)
    src = problem.source.linf_integral / max(problem.T, 1e-300)
    out = []
    for psi, row in zip(psis, terms):
        tol, C = _residual_tolerance(psi, weights, traj.cfl_report["L_f"], traj.cfl_report["L_phi"], osc, grid.h,
                                     traj.dt_used, src)
        out.append(ResidualReport(math.fsum(row.tolist()), *row.tolist(), tol, C, grid.h, traj.dt_used))
    return out


def kato_functional(sol: PairSolution, psi: SpaceTimeBump) -> ResidualReport:
    """Discrete Kato inequality for (u - v)^+ with the source gap (g - h)^+."""
    return kato_functionals(sol, [psi])[0]


def kato_functionals(sol: PairSolution, psis) -> list[ResidualReport]:
    u, v = sol.u, sol.v
    if not (u.every_step and v.every_step):
        raise ValueError("Kato residual needs trajectories recorded at every step")
    grid = u.grid
    for psi in psis:
        psi.check_inside(grid, float(u.times[-1]))
    pu, pv = sol.pair.problem_u, sol.pair.problem_v
    zero = pu.source.is_zero and pv.source.is_zero

    def g_plus(n_, x, t):
        if zero:
            return np.zeros_like(x)
        return np.maximum(pu.source(x, t) - pv.source(x, t), 0.0)

    terms = _kato_terms(pu.flux, pu.phi, sol.weights, grid, u.times, u.values, u.far_left, u.far_right,
                        v.values, v.far_left, v.far_right, psis, g_plus)
    lo, hi = u.cfl_report["data_range"]
    src = (pu.source.linf_integral + pv.source.linf_integral) / max(pu.T, 1e-300)
    out = []
    for psi, row in zip(psis, terms):
        tol, C = _residual_tolerance(psi, sol.weights, sol.L_f, sol.L_phi, hi - lo, grid.h, sol.dt, src)
        out.append(ResidualReport(math.fsum(row.tolist()), *row.tolist(), tol, C, grid.h, sol.dt))
    return out


def phi_gradient_energy(traj: Trajectory, phi: PhiSpec) -> float:
    """Time-integrated sum of squared differences of phi(u) over h: a discrete L2(H1) size, reported only."""
    total = 0.0
    h = traj.grid.h
    for j in range(len(traj.times) - 1):
        dt = traj.times[j + 1] - traj.times[j]
        p = gops.extended(traj.level(j).map(phi), 1)
        total += dt * float(np.sum(np.diff(p) ** 2)) / h
    return total
