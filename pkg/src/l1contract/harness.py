"""Batch execution of a validated RunConfig and the files it leaves on disk.

Every file is written from sorted, fully deterministic data; the manifest is
written last through a temporary file and an atomic rename, so a manifest on
disk always describes a finished run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dual as dl
from . import grid as gops
from . import levy
from . import verify as vf
from .config import DUAL_CHECKS, RunConfig
from .errors import ConfigError, L1ContractError, NumericalFailure
from .grid import Grid, GridFunction
from .scheme import InitialData, PairSolution, ProblemSpec, ScenarioPair, Source, solve_pair

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("solve", "dual", "kernel", "verify", "sweep")
EVERY_STEP_CHECKS = ("kato", "cor3.1c", "cor3.1d")


@dataclass
class RunResult:
    exit_code: int
    reports: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)


def _jsonable(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (tuple, set)):
        return list(v)
    raise TypeError(f"not serialisable: {type(v).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> None:
        data = content.encode()
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def manifest(self, payload: dict) -> None:
        tmp = self.out / "manifest.json.tmp"
        tmp.write_text(dumps(payload))
        os.replace(tmp, self.out / "manifest.json")


def _fmt(v) -> str:
    return "%.17g" % float(v)


def trajectory_csv(traj, times=None) -> str:
    """Long format t,x,value for the given stored times (default all), far fields on rows x = -inf / inf."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "value"])
    x = traj.grid.x
    idx = range(len(traj.times)) if times is None else [traj.index(t) for t in times]
    for j in idx:
        ts = _fmt(traj.times[j])
        w.writerow([ts, "-inf", _fmt(traj.far_left[j])])
        for xi, vi in zip(x, traj.values[j]):
            w.writerow([ts, _fmt(xi), _fmt(vi)])
        w.writerow([ts, "inf", _fmt(traj.far_right[j])])
    return buf.getvalue()


def wide_csv(x, columns: list[tuple[str, np.ndarray]]) -> str:
    """Plot data: one x column and one column per named series."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x"] + [name for name, _ in columns])
    for i, xi in enumerate(x):
        w.writerow([_fmt(xi)] + [_fmt(c[i]) for _, c in columns])
    return buf.getvalue()


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("non-finite values in a discrete solution")


# --- shared computations ---------------------------------------------------------------


def _solution(cfg: RunConfig, every_step: bool) -> PairSolution:
    sol = solve_pair(cfg.pair, cfg.n, cfg.split_r, list(cfg.times), every_step)
    _check_finite(sol.u.values, sol.v.values, sol.u.far_left, sol.u.far_right, sol.v.far_left, sol.v.far_right)
    return sol


def _dual(cfg: RunConfig, L_phi: float) -> dl.DualSolution:
    h = cfg.grid.h
    T = cfg.T
    bump = dl.BumpSpec.unit_mass(h, cfg.dual.bump_center, cfg.dual.bump_radius)
    op = cfg.op.dual()
    sol = dl.solve_dual(bump, op, dl.dual_grid_for(h, cfg.dual.half_width), max(T, L_phi * T),
                        cfg.dual.snapshots, exp_rate=None if op.is_local else cfg.exp_rate)
    _check_finite(sol.values)
    return sol


def _supersolution(cfg: RunConfig, dual: dl.DualSolution) -> levy.SupersolutionConstants:
    rate = 1.0 if dual.op.is_local else cfg.exp_rate
    return levy.supersolution_constants(dual.op, rate, dual.bump.height, dual.bump.radius)


def ordered_pair(pair: ScenarioPair) -> ScenarioPair:
    """(u0 ^ v0, u0 v v0) with min / max sources, unless the pair is already ordered."""
    pu, pv = pair.problem_u, pair.problem_v
    fu, fv = pu.initial, pv.initial
    iu = InitialData(lambda x: np.minimum(fu.fn(x), fv.fn(x)), min(fu.far_left, fv.far_left),
                     min(fu.far_right, fv.far_right), f"min({fu.label}, {fv.label})")
    iv = InitialData(lambda x: np.maximum(fu.fn(x), fv.fn(x)), max(fu.far_left, fv.far_left),
                     max(fu.far_right, fv.far_right), f"max({fu.label}, {fv.label})")
    su, sv = pu.source, pv.source
    if su.is_zero and sv.is_zero:
        lo = hi = su
    else:
        lin = max(su.linf_integral, sv.linf_integral)
        bv = max(su.bv_integral, sv.bv_integral)
        lo = Source(lambda x, t: np.minimum(su(x, t), sv(x, t)), lin, bv, f"min({su.label}, {sv.label})")
        hi = Source(lambda x, t: np.maximum(su(x, t), sv(x, t)), lin, bv, f"max({su.label}, {sv.label})")
    return ScenarioPair(ProblemSpec(pu.flux, pu.phi, pu.op, iu, pu.T, pu.domain, lo),
                        ProblemSpec(pv.flux, pv.phi, pv.op, iv, pv.T, pv.domain, hi), "ordered")


def _is_ordered(pair: ScenarioPair, grid: Grid) -> bool:
    pu, pv = pair.problem_u, pair.problem_v
    u0, v0 = pu.initial.on(grid), pv.initial.on(grid)
    if np.any(u0.values > v0.values) or u0.far_left > v0.far_left or u0.far_right > v0.far_right:
        return False
    return pu.source.is_zero and pv.source.is_zero


def _alpha(op: levy.OperatorKind) -> float:
    return 2.0 if op.is_local else float(op.measure.alpha)


def kernel_oracle(alpha: float, t: float, grid: Grid) -> tuple[str, dict]:
    """Spectral kernel on a centred grid against the closed form when one exists."""
    K, info = dl.heat_kernel_info(alpha, t, grid)
    x = grid.x
    cols = [("computed", K.values)]
    summary = {"alpha": alpha, "t": t, "n": grid.n, "h": grid.h, "widen": info.widen,
               "alias_estimate": info.alias_estimate, "frequency_estimate": info.frequency_estimate,
               "mass_widened": info.mass_widened, "mass_on_grid": info.mass_on_grid,
               "symmetry_error": float(np.max(np.abs(K.values - K.values[::-1])))}
    exact = None
    if alpha == 2.0:
        exact, tol, name = dl.gaussian_kernel(x, t), 1e-6, "gaussian"
    elif alpha == 1.0:
        exact, tol, name = dl.poisson_kernel(x, t), 1e-4, "poisson"
    if exact is not None:
        err = np.abs(K.values - exact)
        cols += [("oracle", exact), ("abs_error", err)]
        summary.update(oracle=name, max_abs_error=float(err.max()), tolerance=tol, passed=bool(err.max() <= tol))
    else:
        summary.update(oracle="mass", tolerance=1e-6, passed=bool(abs(info.mass_widened - 1.0) <= 1e-6))
    return wide_csv(x, cols), summary


# --- the individual checks --------------------------------------------------------------


class _Context:
    """Lazily computed solutions shared by the checks of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.every_step = any(c in EVERY_STEP_CHECKS for c in cfg.checks) or not vf._sources_zero(cfg.pair)
        self._sol = None
        self._dual = None

    @property
    def sol(self) -> PairSolution:
        if self._sol is None:
            self._sol = _solution(self.cfg, self.every_step)
        return self._sol

    @property
    def dual(self) -> dl.DualSolution:
        if self._dual is None:
            self._dual = _dual(self.cfg, self.sol.L_phi)
        return self._dual


def _over_balls(cfg: RunConfig, fn) -> list:
    return [fn(b.x0, b.radius, t) for b in cfg.balls for t in cfg.times]


def run_check(name: str, ctx: _Context) -> list:
    cfg = ctx.cfg
    pair, n, r = cfg.pair, cfg.n, cfg.split_r
    # with sources the checks pick their own source quadrature levels
    shared = ctx.sol if vf._sources_zero(pair) else None
    if name == "thm2.7":
        return _over_balls(cfg, lambda x0, R, t: vf.verify_finite_speed(pair, x0, R, t, n, r, sol=shared))
    if name == "thm2.8":
        a = _alpha(cfg.op)
        return _over_balls(cfg, lambda x0, R, t: vf.verify_duhamel_linear(pair, a, x0, R, t, n, r, sol=shared))
    if name == "thm2.9":
        return _over_balls(cfg, lambda x0, R, t: vf.verify_duhamel_nonlinear(
            pair, ctx.dual, x0, R, t, n, r, sol=shared, exp_rate=cfg.exp_rate))
    if name in ("cor3.1a", "cor3.1b", "cor3.1e"):
        item = name[-1]
        return _over_balls(cfg, lambda x0, R, t: vf.verify_corollary(
            pair, item, x0, R, t, dual=ctx.dual, n=n, split_r=r, sol=shared))
    if name == "cor3.1c":
        if _is_ordered(pair, cfg.grid):
            rep = vf.verify_corollary(pair, "c", n=n, split_r=r, sol=ctx.sol)
            reordered = False
        else:
            rep = vf.verify_corollary(ordered_pair(pair), "c", n=n, split_r=r)
            reordered = True
        rep.details["reordered_pair"] = reordered
        return [rep]
    if name == "cor3.1d":
        return [vf.verify_corollary(pair, "d", n=n, split_r=r, sol=ctx.sol),
                vf.verify_corollary(pair.swapped(), "d", n=n, split_r=r,
                                    sol=PairSolution(pair.swapped(), ctx.sol.v, ctx.sol.u, ctx.sol.weights,
                                                     ctx.sol.L_f, ctx.sol.L_phi))]
    if name == "kato":
        rng = np.random.default_rng(cfg.seed)
        psis = vf.random_test_functions(rng, cfg.kato_count, (cfg.x_min, cfg.x_max), cfg.T)
        return vf.kato_residuals(ctx.sol, psis)
    if name == "expbound":
        return [vf.expbound_report(ctx.dual, _supersolution(cfg, ctx.dual))]
    if name == "lem4.1":
        g = cfg.grid
        f = pair.problem_u.initial.on(g) - pair.problem_v.initial.on(g)
        out = []
        for split in (0.5, 2.0):
            w = gops.discretize(cfg.op, g, split)
            out += vf.operator_bound_report(w, f, cfg.op)
        return out
    if name == "cor4.3":
        tau = cfg.dual.tau if cfg.dual.tau is not None else cfg.T
        moll = dl.MollifierSpec(cfg.dual.epsilon, cfg.dual.delta)
        b = cfg.balls[0]
        return [vf.reduced_dual_check(pair, ctx.dual, moll, tau, b.x0, cfg.dual.R, cfg.dual.tilde_delta, n, r)]
    raise ConfigError(f"unknown check {name!r}")


def run_checks(cfg: RunConfig, ctx: _Context | None = None) -> list:
    ctx = ctx or _Context(cfg)
    if cfg.threads > 1 and len(cfg.checks) > 1:
        # build the shared solutions first so worker threads only read them
        _ = ctx.sol
        if any(c in DUAL_CHECKS for c in cfg.checks):
            _ = ctx.dual
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            groups = list(pool.map(lambda c: run_check(c, ctx), cfg.checks))
    else:
        groups = [run_check(c, ctx) for c in cfg.checks]
    return [rep for g in groups for rep in g]


# --- manifest -------------------------------------------------------------------------


def _constants(ctx: _Context) -> dict:
    out = {}
    if ctx._sol is not None:
        s = ctx._sol
        out.update(L_f=s.L_f, L_phi=s.L_phi, h=s.grid.h, dt=s.dt, cfl=s.u.cfl_report,
                   cfl_formula="dt = safety / (2 L_f/h + L_phi (2 local/h^2 + jump_mass + |drift|/h))")
    if ctx._dual is not None:
        d = ctx._dual
        out["dual"] = {"T_tilde": d.T_tilde, "dt": d.dt_used, "steps": d.steps, "h": d.grid.h, "n": d.grid.n,
                       "bump_height": d.bump.height, "operator": d.op.describe(),
                       "T_tilde_formula": "max(T, L_phi*T)"}
        if not d.op.is_local or ctx.cfg.exp_rate is not None:
            c = _supersolution(ctx.cfg, d)
            out["supersolution"] = {"k": c.k, "K": c.K, "C": c.C, "C_k": c.C_k,
                                    "C_k_formula": "e^k k^2 m2(|z|<1)/2 + int_{|z|>1} e^{k|z|} dmu",
                                    "C_formula": "max Phi_0 * e^{k * bump_radius}"}
    return out


def _formulas(reports) -> dict:
    out = {}
    for r in reports:
        for k, v in r.details.items():
            if k.endswith("formula") or k.startswith("tol_formula"):
                out.setdefault(r.inequality_id, {})[k] = v
    return out


def _summary(reports) -> list:
    return [{"id": r.inequality_id, "pass": r.passed, "margin": r.margin, "tolerance": r.tolerance,
             "n": r.n, "x0": r.x0, "ball_radius": r.ball_radius, "t": r.t} for r in reports]


def _base_manifest(cfg: RunConfig, command: str) -> dict:
    # the output path is left out so identical runs give identical bytes wherever they are written
    echo = {k: v for k, v in cfg.echo.items() if k != "out"}
    return {"command": command, "preset": cfg.name, "config": echo, "seed": cfg.seed, "threads": cfg.threads}


def _write_solution(w: _Writer, sol: PairSolution, plot_times) -> None:
    """Trajectories and plot data at the snapshot times only, also for every-step runs."""
    w.text("trajectory_u.csv", trajectory_csv(sol.u, plot_times))
    w.text("trajectory_v.csv", trajectory_csv(sol.v, plot_times))
    cols = []
    for t in plot_times:
        j = sol.u.index(t)
        cols += [(f"u@{t:g}", sol.u.values[j]), (f"v@{t:g}", sol.v.values[j])]
    w.text("plot_solution.csv", wide_csv(sol.grid.x, cols))


def _write_dual(w: _Writer, cfg: RunConfig, dual: dl.DualSolution) -> bool:
    idx = np.unique(np.linspace(0, len(dual.times) - 1, 6).round().astype(int))
    w.text("plot_dual.csv", wide_csv(dual.grid.x, [(f"Phi@{dual.times[i]:.6g}", dual.values[i]) for i in idx]))
    rep = dl.exp_supersolution_check(dual, _supersolution(cfg, dual))
    w.text("certificate.json", dumps(dl.certificate(dual, rep)))
    return rep.passed


def execute(cfg: RunConfig, command: str, out: Path | None = None, n_list=None) -> RunResult:
    """Run one subcommand; numerical and configuration errors become exit codes and a failure record."""
    out = Path(out if out is not None else cfg.out)
    w = _Writer(out)
    manifest = _base_manifest(cfg, command)
    ctx = _Context(cfg)
    reports = []
    try:
        code = _execute(cfg, command, w, ctx, reports, manifest, n_list)
    except NumericalFailure as exc:
        code = EXIT_NUMERIC
        manifest["failure"] = {"type": type(exc).__name__, "message": str(exc), "kind": "numerical"}
    except (L1ContractError, ValueError) as exc:
        code = EXIT_CONFIG
        manifest["failure"] = {"type": type(exc).__name__, "message": str(exc), "kind": "configuration"}
    except FloatingPointError as exc:
        code = EXIT_NUMERIC
        manifest["failure"] = {"type": type(exc).__name__, "message": str(exc), "kind": "numerical"}
    if "failure" in manifest:
        w.text("failure.json", dumps({"exit_code": code, **manifest["failure"]}))
    manifest["constants"] = _constants(ctx)
    manifest["reports"] = _summary(reports)
    manifest["formulas"] = _formulas(reports)
    manifest["files"] = dict(sorted(w.files.items()))
    manifest["exit_code"] = code
    manifest["status"] = {EXIT_PASS: "pass", EXIT_FAIL: "fail"}.get(code, "error")
    w.manifest(manifest)
    return RunResult(code, reports, dict(w.files), manifest)


def _execute(cfg, command, w, ctx, reports, manifest, n_list) -> int:
    if command == "solve":
        _write_solution(w, ctx.sol, [0.0, *cfg.times])
        return EXIT_PASS
    if command == "dual":
        return EXIT_PASS if _write_dual(w, cfg, ctx.dual) else EXIT_FAIL
    if command == "kernel":
        if cfg.kernel is None:
            a, t = _alpha(cfg.op), cfg.T
        else:
            a, t = cfg.kernel["alpha"], cfg.kernel["t"]
        text, summary = kernel_oracle(a, t, Grid.centered(cfg.n, cfg.grid.h))
        w.text("kernel_oracle.csv", text)
        manifest["kernel"] = summary
        return EXIT_PASS if summary["passed"] else EXIT_FAIL
    if command == "verify":
        reports += run_checks(cfg, ctx)
        ok = all(r.passed for r in reports)
        w.text("report.csv", vf.reports_csv(reports))
        w.text("report.txt", vf.reports_text(reports))
        if ctx._sol is not None:
            _write_solution(w, ctx.sol, [0.0, *cfg.times])
        if ctx._dual is not None:
            ok = _write_dual(w, cfg, ctx.dual) and ok
        if "thm2.8" in cfg.checks:
            a, t = (cfg.kernel["alpha"], cfg.kernel["t"]) if cfg.kernel else (_alpha(cfg.op), cfg.times[-1])
            text, summary = kernel_oracle(a, t, Grid.centered(cfg.n, cfg.grid.h))
            w.text("kernel_oracle.csv", text)
            manifest["kernel"] = summary
            ok = ok and summary["passed"]
        return EXIT_PASS if ok else EXIT_FAIL
    if command == "sweep":
        rows, table = sweep(cfg, n_list)
        reports += rows
        w.text("sweep.csv", table)
        w.text("report.csv", vf.reports_csv(rows))
        mags = [-r.violation for r in rows]
        manifest["sweep"] = {"n": [r.n for r in rows], "check": rows[0].inequality_id if rows else None,
                             "violation_nonincreasing": all(b <= a for a, b in zip(mags, mags[1:]))}
        return EXIT_PASS if all(r.passed for r in rows) else EXIT_FAIL
    raise ConfigError(f"unknown command {command!r}")


def sweep(cfg: RunConfig, n_list=None) -> tuple[list, str]:
    """Primary ball check at each n for the first ball and last time; returns reports and the table CSV."""
    n_list = list(n_list or cfg.sweep_n or [cfg.n])
    if any(a >= b for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("sweep grid sizes must be ascending")
    primary = next((c for c in cfg.checks if c in ("thm2.7", "thm2.8", "thm2.9")), None)
    if primary is None:
        raise ConfigError("sweep needs one of thm2.7, thm2.8, thm2.9 among the checks")
    b, t = cfg.balls[0], cfg.times[-1]
    reports = []
    for n in n_list:
        sub = cfg.with_n(n)
        sub = RunConfig(**{**sub.__dict__, "checks": (primary,), "balls": (b,), "times": (t,)})
        reports += run_checks(sub)
    return reports, vf.sweep_csv(vf.sweep_table(reports))
