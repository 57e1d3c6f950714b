"""Both sides of the local L1 contraction inequalities on discrete solutions.

Every report carries its tolerance together with the formula and the pieces
that produced it, so a failing margin can be traced to a concrete budget term.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dual as dl
from . import grid as gops
from . import levy
from .errors import BallExceedsDomain, NotTempered
from .grid import Grid, GridFunction
from .scheme import PairSolution, ProblemSpec, ScenarioPair, SpaceTimeBump, kato_functionals, solve_pair

ROUNDING = 1e-12


@dataclass(frozen=True)
class ContractionReport:
    inequality_id: str
    lhs: float
    rhs: float
    tolerance: float
    n: int
    h: float
    dt: float
    x0: float = 0.0
    ball_radius: float = 0.0
    t: float = 0.0
    details: dict = field(default_factory=dict, compare=False)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def violation(self) -> float:
        return min(0.0, self.margin)

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tolerance

    def record(self) -> dict:
        out = {
            "inequality_id": self.inequality_id,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "n": self.n,
            "h": self.h,
            "dt": self.dt,
            "x0": self.x0,
            "ball_radius": self.ball_radius,
            "t": self.t,
        }
        out.update({k: v for k, v in self.details.items()})
        return out

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{self.inequality_id:<8} {flag} n={self.n} lhs={self.lhs:.6e} rhs={self.rhs:.6e} "
                f"margin={self.margin:.3e} tol={self.tolerance:.3e}")


CSV_FIELDS = ["inequality_id", "pass", "lhs", "rhs", "margin", "tolerance", "n", "h", "dt", "x0", "ball_radius", "t"]


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in reports:
        rec = r.record()
        w.writerow([repr(rec[k]) if isinstance(rec[k], float) else rec[k] for k in CSV_FIELDS])
    return buf.getvalue()


def reports_text(reports) -> str:
    """One block per report, `key = value` lines, blank line between records."""
    blocks = []
    for r in reports:
        lines = []
        for k, v in r.record().items():
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


# --- shared helpers ----------------------------------------------------------


def _truncate(pair: ScenarioPair, t: float) -> ScenarioPair:
    return ScenarioPair(replace(pair.problem_u, T=t), replace(pair.problem_v, T=t), pair.relationship)


def _sources_zero(pair: ScenarioPair) -> bool:
    return pair.problem_u.source.is_zero and pair.problem_v.source.is_zero


def _solve_for(pair, t, n, split_r, snapshot_times=None, every_step=False) -> PairSolution:
    return solve_pair(_truncate(pair, t), n, split_r, snapshot_times, every_step)


def _ball_l1(f: GridFunction, x0: float, radius: float) -> float:
    return gops.l1_norm(f, (x0, radius))


def _ball_integral(f: GridFunction, x0: float, radius: float) -> float:
    return gops.integral(f, (x0, radius))


def _gap(sol: PairSolution, j: int, mode: str = "pos") -> GridFunction:
    d = sol.u.level(j) - sol.v.level(j)
    return d.positive_part() if mode == "pos" else d.map(np.abs)


def _source_gap(sol: PairSolution, t: float, mode: str = "pos") -> GridFunction:
    g = sol.grid
    pu, pv = sol.pair.problem_u, sol.pair.problem_v
    ends = np.array([g.x_min, g.x_max])
    d = pu.source(g.x, t) - pv.source(g.x, t)
    de = pu.source(ends, t) - pv.source(ends, t)
    f = GridFunction(g, d, de[0], de[1])
    return f.positive_part() if mode == "pos" else f.map(np.abs)


def _budget(sol: PairSolution, t: float, ball_outer: float, extra_scale: float = 0.0) -> tuple[float, dict]:
    """First-order consistency budget shared by the ball inequalities."""
    h, dt = sol.grid.h, sol.dt
    w = sol.weights
    u0, v0 = sol.u.level(0), sol.v.level(0)
    bv = gops.bv_seminorm(u0) + gops.bv_seminorm(v0)
    osc = float(np.max(np.abs(gops.extended(u0 - v0, 1))))
    op_scale = 2.0 * w.local_coeff + w.total_jump_mass + abs(w.drift)
    speeds = 1.0 + sol.L_f + sol.L_phi * (1.0 + op_scale) + extra_scale
    consistency = (h + dt) * (1.0 + t) * speeds * bv
    edge = 4.0 * osc * h
    leakage = sol.u.cfl_report["leakage_bound"] + sol.v.cfl_report["leakage_bound"]
    parts = {
        "tol_consistency": consistency,
        "tol_ball_edges": edge,
        "tol_leakage": leakage,
        "tol_formula": "(h+dt)*(1+t)*(1+L_f+L_phi*(1+op_scale))*(BV(u0)+BV(v0)) + 4*|u0-v0|_inf*h + leakage",
        "L_f": sol.L_f,
        "L_phi": sol.L_phi,
        "op_scale": op_scale,
        "bv_data": bv,
    }
    return consistency + edge + leakage, parts


def _check_balls(grid: Grid, x0: float, *radii: float) -> None:
    for r in radii:
        grid.ball_mask(x0, r)


def _left_levels(sol: PairSolution, t: float):
    """Indices j with times[j] < t and their rectangle widths."""
    times = sol.u.times
    out = []
    for j in range(len(times) - 1):
        if times[j] < t - 1e-14:
            out.append((j, float(min(times[j + 1], t) - times[j])))
    return out


# --- finite speed ----------------------------------------------------------------


def verify_finite_speed(
    pair: ScenarioPair, x0: float, ball_radius: float, t: float, n: int = 1000,
    split_r: float | None = None, sol: PairSolution | None = None,
) -> ContractionReport:
    pu = pair.problem_u
    if pu.phi.name != "zero":
        raise ValueError("finite speed check needs phi = 0")
    if sol is None:
        sol = _solve_for(pair, t, n, split_r, every_step=not _sources_zero(pair))
    L_f = sol.L_f
    outer = ball_radius + L_f * t
    _check_balls(sol.grid, x0, ball_radius, outer)
    j_t = sol.u.index(t)
    lhs = _ball_l1(_gap(sol, j_t), x0, ball_radius)
    init = _ball_l1(_gap(sol, 0), x0, outer)
    src = 0.0
    if not _sources_zero(pair):
        for j, w in _left_levels(sol, t):
            s = float(sol.u.times[j])
            src += w * _ball_l1(_source_gap(sol, s), x0, ball_radius + L_f * (t - s))
    tol, parts = _budget(sol, t, outer)
    return ContractionReport("thm2.7", lhs, init + src, tol, sol.grid.n, sol.grid.h, sol.dt, x0, ball_radius, t,
                             {**parts, "rhs_initial": init, "rhs_source": src})


# --- linear Duhamel -------------------------------------------------------------


def _is_fractional(op: levy.OperatorKind, alpha: float) -> bool:
    if alpha == 2.0:
        return op.is_local
    mu = op.measure
    return (isinstance(mu, levy.Stable) and math.isclose(mu.alpha, alpha)
            and math.isclose(mu.c, levy.fractional_laplacian_constant(alpha), rel_tol=1e-12))


def _kernel_grid(sol: PairSolution) -> Grid:
    """Centred grid wide enough that a ball integral over the solution grid never needs kernel values beyond it."""
    return Grid.centered(sol.grid.n, sol.grid.h)


def verify_duhamel_linear(
    pair: ScenarioPair, alpha: float, x0: float, ball_radius: float, t: float, n: int = 1000,
    split_r: float | None = None, n_source_times: int = 20, sol: PairSolution | None = None,
) -> ContractionReport:
    pu = pair.problem_u
    if pu.phi.name != "identity":
        raise ValueError("the linear Duhamel bound needs phi = identity")
    if not _is_fractional(pu.op, alpha):
        raise ValueError("operator must be the Laplacian (alpha=2) or the fractional Laplacian of order alpha")
    zero_src = _sources_zero(pair)
    snaps = None if zero_src else np.linspace(0.0, t, n_source_times + 1)
    if sol is None:
        sol = _solve_for(pair, t, n, split_r, snaps)
    L_f = sol.L_f
    outer = ball_radius + L_f * t
    _check_balls(sol.grid, x0, ball_radius, outer)
    kg = _kernel_grid(sol)
    K, info = dl.heat_kernel_info(alpha, t, kg)
    lhs = _ball_l1(_gap(sol, sol.u.index(t)), x0, ball_radius)
    gap0 = _gap(sol, 0)
    init = _ball_integral(gops.convolve(gap0, K), x0, outer)
    src = 0.0
    if not zero_src:
        for j, w in _left_levels(sol, t):
            s = float(sol.u.times[j])
            Ks = dl.heat_kernel(alpha, t - s, kg)
            src += w * _ball_integral(gops.convolve(_source_gap(sol, s), Ks), x0, ball_radius + L_f * (t - s))
    tol, parts = _budget(sol, t, outer)
    far = max(gap0.far_left, gap0.far_right)
    W = kg.x_max
    trunc = far * dl.heat_kernel_outside_mass(alpha, t, W) * 2.0 * outer
    alias = (info.alias_estimate + info.frequency_estimate) * 2.0 * outer * gops.l1_norm(gap0) if far == 0.0 else (
        (info.alias_estimate + info.frequency_estimate) * 2.0 * outer * (gops.l1_norm(gap0) + far * 2.0 * W))
    src_quad = 0.0 if zero_src else (t / n_source_times) * (
        pu.source.linf_integral + pair.problem_v.source.linf_integral) / max(pu.T, 1e-300) * 2.0 * outer
    tol += trunc + alias + src_quad
    parts.update(tol_kernel_truncation=trunc, tol_kernel_alias=alias, tol_source_quadrature=src_quad,
                 kernel_widen=info.widen, rhs_initial=init, rhs_source=src)
    return ContractionReport("thm2.8", lhs, init + src, tol, sol.grid.n, sol.grid.h, sol.dt, x0, ball_radius, t, parts)


# --- nonlinear Duhamel -----------------------------------------------------------


def _dual_terms(sol: PairSolution, dual: dl.DualSolution, x0, ball_radius, t, mode, n_source_times, single=None):
    """Enlarged-ball integral of Phi(-., L_phi t) * gap plus the source rectangles."""
    L_f, L_phi = sol.L_f, sol.L_phi
    outer = ball_radius + 1.0 + L_f * t
    _check_balls(sol.grid, x0, ball_radius, outer)
    if L_phi * t > dual.T_tilde * (1.0 + 1e-12):
        raise ValueError("dual horizon shorter than L_phi * t")
    if not math.isclose(dual.grid.h, sol.grid.h, rel_tol=1e-9):
        raise ValueError("dual and solution grids need the same cell width")
    gap0 = single(0) if single else _gap(sol, 0, mode)
    init = _ball_integral(gops.convolve(gap0, dual.reflected_at(L_phi * t)), x0, outer)
    src = 0.0
    if not _sources_zero(sol.pair) or single is not None:
        for j, w in _left_levels(sol, t):
            s = float(sol.u.times[j])
            sg = _source_gap(sol, s, mode) if single is None else single(("src", s))
            if not np.any(sg.values) and sg.far_left == 0.0 and sg.far_right == 0.0:
                continue
            conv = gops.convolve(sg, dual.reflected_at(L_phi * (t - s)))
            src += w * _ball_integral(conv, x0, ball_radius + 1.0 + L_f * (t - s))
    return init, src, outer, gap0


def _dual_budget(sol, dual, gap0, outer, t):
    """Error terms from the discrete dual solution and its finite support."""
    mass = max(dual.l1_mass(float(tt)) for tt in dual.times)
    dual_w = dual.weights
    op_scale = 2.0 * dual_w.local_coeff + dual_w.total_jump_mass + abs(dual_w.drift)
    disc = (sol.grid.h + dual.dt_used + dual.spacing) * (1.0 + op_scale) * mass * gops.l1_norm(gap0)
    # a nonzero far-field gap sees the part of Phi cut off at the dual grid's ends
    edge = float(dual.values[:, [0, -1]].max())
    far = max(abs(gap0.far_left), abs(gap0.far_right))
    tail = far * 2.0 * outer * edge * dual.grid.x_max
    return disc + tail, {"tol_dual_discretization": disc, "tol_dual_tail": tail, "dual_max_mass": mass,
                         "dual_formula": "(h+dt_dual+spacing)*(1+op_scale_adj)*max_mass*|gap0|_L1 + far_gap*2*outer*edge*W"}


def verify_duhamel_nonlinear(
    pair: ScenarioPair, dual: dl.DualSolution, x0: float, ball_radius: float, t: float, n: int = 1000,
    split_r: float | None = None, n_source_times: int = 20, sol: PairSolution | None = None,
    exp_rate: float | None = None,
) -> ContractionReport:
    pu = pair.problem_u
    if not pu.op.is_local:
        if exp_rate is None:
            raise NotTempered("the nonlinear bound needs a certified exponential moment")
        try:
            levy.assert_tempered(pu.op.effective_measure(), exp_rate)
        except levy.Divergent as exc:
            raise NotTempered(str(exc)) from exc
    if dual.op != pu.op.dual() and not (pu.op.is_local and dual.op.is_local):
        raise ValueError("dual must be solved with the adjoint of the pair's operator")
    zero_src = _sources_zero(pair)
    snaps = None if zero_src else np.linspace(0.0, t, n_source_times + 1)
    if sol is None:
        sol = _solve_for(pair, t, n, split_r, snaps)
    lhs = _ball_l1(_gap(sol, sol.u.index(t)), x0, ball_radius)
    init, src, outer, gap0 = _dual_terms(sol, dual, x0, ball_radius, t, "pos", n_source_times)
    tol, parts = _budget(sol, t, outer)
    dtol, dparts = _dual_budget(sol, dual, gap0, outer, t)
    src_quad = 0.0 if zero_src else (t / n_source_times) * (
        pu.source.linf_integral + pair.problem_v.source.linf_integral) / max(pu.T, 1e-300) * 2.0 * outer * dual.l1_mass(dual.T_tilde)
    parts.update(dparts, rhs_initial=init, rhs_source=src, tol_source_quadrature=src_quad)
    return ContractionReport("thm2.9", lhs, init + src, tol + dtol + src_quad, sol.grid.n, sol.grid.h, sol.dt,
                             x0, ball_radius, t, parts)


# --- corollaries ---------------------------------------------------------------------


def _ball_bv(f: GridFunction, x0: float, radius: float) -> float:
    mask = f.grid.ball_mask(x0, radius)
    v = f.values[mask]
    return float(np.sum(np.abs(np.diff(v))))


def verify_corollary(
    pair: ScenarioPair, item: str, x0: float = 0.0, ball_radius: float = 1.0, t: float | None = None,
    dual: dl.DualSolution | None = None, n: int = 1000, split_r: float | None = None,
    n_source_times: int = 20, sol: PairSolution | None = None, shifts=(1, 2, 4),
) -> ContractionReport:
    """Items a)-e).  For b) and e) only `problem_u` is used (v plays no role)."""
    pu, pv = pair.problem_u, pair.problem_v
    t = pu.T if t is None else t
    if item == "c":
        g = Grid(pu.domain[0], pu.domain[1], n if sol is None else sol.grid.n)
        u0, v0 = pu.initial.on(g), pv.initial.on(g)
        if np.any(u0.values > v0.values) or u0.far_left > v0.far_left or u0.far_right > v0.far_right:
            raise ValueError("comparison check needs u0 <= v0")
        if not (pu.source.is_zero and pv.source.is_zero):
            pts = np.concatenate([g.x, [g.x_min, g.x_max]])
            for s in np.linspace(0.0, pu.T, 65):
                if np.any(pu.source(pts, s) > pv.source(pts, s)):
                    raise ValueError("comparison check needs g <= h on sampled points")
    if item in ("c", "d"):
        if sol is None:
            sol = solve_pair(pair, n, split_r, None, every_step=True)
        if item == "c":
            diff = sol.u.values - sol.v.values
            far = np.maximum(sol.u.far_left - sol.v.far_left, sol.u.far_right - sol.v.far_right)
            lhs = float(max(diff.max(), far.max(), 0.0))
            return ContractionReport("cor3.1c", lhs, 0.0, ROUNDING, sol.grid.n, sol.grid.h, sol.dt, t=pu.T,
                                     details={"max_positive_gap": lhs})
        worst = 0.0
        g = sol.grid
        pts = np.concatenate([g.x, [g.x_min, g.x_max]])
        u0 = sol.u.level(0)
        lo = min(float(u0.values.min()), u0.far_left, u0.far_right)
        hi = max(float(u0.values.max()), u0.far_left, u0.far_right)
        times = sol.u.times
        for j in range(len(times)):
            vals = np.concatenate([sol.u.values[j], [sol.u.far_left[j], sol.u.far_right[j]]])
            worst = max(worst, float(np.max(lo - vals)), float(np.max(vals - hi)))
            if j + 1 < len(times):
                gs = pu.source(pts, float(times[j]))
                dt = float(times[j + 1] - times[j])
                lo += dt * float(gs.min())
                hi += dt * float(gs.max())
        scale = max(1.0, abs(lo), abs(hi))
        return ContractionReport("cor3.1d", worst, 0.0, ROUNDING * scale, g.n, g.h, sol.dt, t=pu.T,
                                 details={"final_lower": lo, "final_upper": hi})
    if dual is None:
        raise ValueError(f"item {item} needs a dual solution")
    zero_src = _sources_zero(pair)
    snaps = None if zero_src else np.linspace(0.0, t, n_source_times + 1)
    if sol is None:
        sol = _solve_for(pair, t, n, split_r, snaps)
    j_t = sol.u.index(t)
    grid = sol.grid
    if item == "a":
        lhs = _ball_l1(sol.u.level(j_t) - sol.v.level(j_t), x0, ball_radius)
        init, src, outer, gap0 = _dual_terms(sol, dual, x0, ball_radius, t, "abs", n_source_times)
        ident = "cor3.1a"
    elif item == "b":
        u = sol.u

        def single(key):
            if key == 0:
                return u.level(0).map(np.abs)
            s = key[1]
            ends = np.array([grid.x_min, grid.x_max])
            ge = np.abs(pu.source(ends, s))
            return GridFunction(grid, np.abs(pu.source(grid.x, s)), ge[0], ge[1])

        lhs = _ball_l1(u.level(j_t), x0, ball_radius)
        init, src, outer, gap0 = _dual_terms(sol, dual, x0, ball_radius, t, "abs", n_source_times,
                                             single=single)
        ident = "cor3.1b"
    elif item == "e":
        u = sol.u
        lhs = _ball_bv(u.level(j_t), x0, ball_radius)
        outer = ball_radius + 1.0 + sol.L_f * t
        _check_balls(grid, x0, ball_radius, outer)
        kern = dual.reflected_at(sol.L_phi * t)
        u0 = u.level(0)
        quotients = []
        for m in shifts:
            d = (u0.shift(m) - u0).map(np.abs)
            quotients.append(_ball_integral(gops.convolve(d, kern), x0, outer) / (m * grid.h))
        init = max(quotients)
        src = pu.source.bv_integral * dual.l1_mass(dual.T_tilde)
        gap0 = (u0.shift(1) - u0).map(np.abs)
        tol, parts = _budget(sol, t, outer)
        remark = dual.l1_mass(sol.L_phi * t) * gops.bv_seminorm(u0)
        parts.update(rhs_initial=init, rhs_source=src, shift_quotients=quotients, remark_bound=remark,
                     tol_formula_e="budget of a) with BV(u0) in place of the L1 gap")
        return ContractionReport("cor3.1e", lhs, init + src, tol, grid.n, grid.h, sol.dt, x0, ball_radius, t, parts)
    else:
        raise ValueError(f"unknown corollary item {item!r}")
    tol, parts = _budget(sol, t, outer)
    dtol, dparts = _dual_budget(sol, dual, gap0, outer, t)
    parts.update(dparts, rhs_initial=init, rhs_source=src)
    return ContractionReport(ident, lhs, init + src, tol + dtol, grid.n, grid.h, sol.dt, x0, ball_radius, t, parts)


# --- Kato inequality and the reduced dual form --------------------------------------


def kato_residuals(sol: PairSolution, psis) -> list[ContractionReport]:
    """Discrete Kato functional per test function as reports: lhs 0, rhs the functional value."""
    out = []
    for psi, r in zip(psis, kato_functionals(sol, psis)):
        details = {
            "time_term": r.time_term, "flux_term": r.flux_term, "diffusion_term": r.diffusion_term,
            "source_term": r.source_term, "tol_constant": r.constant,
            "tol_formula": "C*(h+dt), C = area(supp psi)*(osc*(psi_t+psi_tt+(L_f+L_phi*op_scale)*(psi_x+psi_xx)) + src*(psi+psi_t+psi_x))",
            "psi": [psi.x_center, psi.x_radius, psi.t_center, psi.t_radius, psi.amplitude],
        }
        out.append(ContractionReport("kato", 0.0, r.total, r.tolerance, sol.grid.n, sol.grid.h, sol.dt,
                                     psi.x_center, psi.x_radius, psi.t_center, details))
    return out


def kato_residual(sol: PairSolution, psi: SpaceTimeBump) -> ContractionReport:
    return kato_residuals(sol, [psi])[0]


def kato_violation(report: ContractionReport, floor: float = ROUNDING) -> float:
    """Negative part of the functional, with values above -floor counted as zero."""
    v = min(report.rhs, 0.0)
    return 0.0 if v > -floor else -v


def random_test_functions(rng: np.random.Generator, count: int, x_range, T: float) -> list[SpaceTimeBump]:
    """Bumps whose supports sit strictly inside x_range x (0, T)."""
    lo, hi = x_range
    out = []
    for _ in range(count):
        xr = rng.uniform(0.2, 1.0)
        xc = rng.uniform(lo + xr + 0.05, hi - xr - 0.05)
        tr = rng.uniform(0.1, 0.45) * T
        tc = rng.uniform(tr + 0.01 * T, T - tr - 0.01 * T)
        out.append(SpaceTimeBump(xc, xr, tc, tr, rng.uniform(0.5, 2.0)))
    return out


def reduced_dual_check(
    pair: ScenarioPair, dual: dl.DualSolution, moll: dl.MollifierSpec, tau: float, x0: float = 0.0,
    R: float | None = None, tilde_delta: float = 0.0, n: int = 1000, split_r: float | None = None,
    n_times: int = 20, sol: PairSolution | None = None,
) -> ContractionReport:
    """Time-endpoint inequality for Gamma = K_delta * gamma between 0 and tau."""
    times = np.linspace(0.0, tau, n_times + 1)
    if sol is None:
        sol = _solve_for(pair, tau, n, split_r, times)
    L_f, L_phi = sol.L_f, sol.L_phi
    if R is None:
        R = L_f * pair.problem_u.T + 1.0 + 2.0 * moll.epsilon
    grid = sol.grid
    kd = [(float(t), dl.k_delta(dual, tau, L_phi, float(t), moll)) for t in times]
    gam = [(float(t), dl.gamma_cutoff(x0, R, L_f, moll.epsilon, tilde_delta, float(t), grid, pair.problem_u.T))
           for t in times]
    Gamma = dl.gamma_test_function(kd, gam)
    h = grid.h
    lhs = h * float(np.dot(_gap(sol, sol.u.index(tau)).values, Gamma[-1][1].values))
    init = h * float(np.dot(_gap(sol, 0).values, Gamma[0][1].values))
    src = 0.0
    for j in range(len(times) - 1):
        s = float(times[j])
        src += (times[j + 1] - s) * h * float(np.dot(_source_gap(sol, s).values, Gamma[j][1].values))
    adj_w = gops.discretize(pair.problem_u.op.dual(), grid, sol.weights.split_r)
    gres = dl.gamma_subsolution_residual(Gamma, L_f, L_phi, adj_w, moll.delta)
    gap_mass = max(gops.l1_norm(_gap(sol, sol.u.index(float(t)))) for t in times)
    tol = tau * gap_mass * max(gres.budget, 0.0) + 4.0 * h * float(np.max(Gamma[0][1].values)) * max(
        gops.l1_norm(_gap(sol, 0)), 1e-300)
    details = {
        "rhs_initial": init, "rhs_source": src, "R": R, "epsilon": moll.epsilon, "delta": moll.delta,
        "gamma_residual_max": gres.max_residual, "gamma_residual_budget": gres.budget,
        "tol_formula": "tau*max_t|(u-v)^+|_L1*Gamma_budget + 4*h*max Gamma*|gap0|_L1",
    }
    return ContractionReport("cor4.3", lhs, init + src, tol, grid.n, h, sol.dt, x0, R, tau, details)


# --- operator bounds and exponential bound as reports ---------------------------------


def operator_bound_report(weights, f: GridFunction, op=None) -> list[ContractionReport]:
    rep = gops.operator_l1_bound_check(weights, f, op)
    out = []
    g = f.grid
    if rep.small_lhs is not None:
        out.append(ContractionReport("lem4.1", rep.small_lhs, rep.small_rhs, rep.tolerance, g.n, g.h, 0.0,
                                     details={"part": "small"}))
    if rep.large_lhs is not None:
        out.append(ContractionReport("lem4.1", rep.large_lhs, rep.large_rhs, rep.tolerance, g.n, g.h, 0.0,
                                     details={"part": "large"}))
    return out


def expbound_report(sol: dl.DualSolution, consts: levy.SupersolutionConstants) -> ContractionReport:
    r = dl.exp_supersolution_check(sol, consts)
    return ContractionReport("expbound", r.max_violation, 0.0, r.tolerance, sol.grid.n, sol.grid.h, sol.dt_used,
                             sol.bump.center, 0.0, sol.T_tilde,
                             {"k": consts.k, "K": consts.K, "C": consts.C, "C_k": consts.C_k,
                              "worst_time": r.worst_time, "worst_x": r.worst_x,
                              "tol_formula": "C*exp(K*T_tilde)*T_tilde*(1+k)^2*(h+dt)"})


# --- sweeps ------------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    n: int
    margin: float
    tolerance: float
    violation: float
    ratio: float | None


def sweep_table(reports) -> list[SweepRow]:
    """Rows in the given order with successive ratios of the violation term."""
    rows = []
    prev = None
    for r in reports:
        v = r.violation
        ratio = None
        if prev is not None and v != 0.0:
            ratio = prev / v
        rows.append(SweepRow(r.n, r.margin, r.tolerance, v, ratio))
        prev = v
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "margin", "tolerance", "violation", "ratio"])
    for r in rows:
        w.writerow([r.n, repr(r.margin), repr(r.tolerance), repr(r.violation), "" if r.ratio is None else repr(r.ratio)])
    return buf.getvalue()
