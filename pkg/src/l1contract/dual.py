"""Dual equation d_t Phi = (L* Phi)^+, fractional heat kernels, and the mollified test functions.

Everything lives on lattice-centred grids (`Grid.centered`) so that the results
can be used directly as convolution kernels against solution grids of the same
cell width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import erfc, roots_legendre

from . import grid as gops
from . import levy
from .errors import (
    CflViolation, DomainTooSmall, NotTempered, SnapshotMismatch, SpectralNegativity, TimeOutOfRange,
)
from .grid import Grid, GridFunction, OperatorWeights
from .levy import OperatorKind, SupersolutionConstants
from .scheme import SAFETY, standard_bump


@dataclass(frozen=True)
class BumpSpec:
    """Phi_0(x) = height * exp(1 - 1/(1 - ((x - center)/radius)^2)) inside the ball."""

    center: float = 0.0
    radius: float = 0.5
    height: float = 1.0

    def __post_init__(self):
        if self.radius <= 0.0 or self.height < 0.0:
            raise ValueError("bump needs radius > 0 and height >= 0")

    def __call__(self, x):
        return self.height * standard_bump((np.asarray(x, dtype=float) - self.center) / self.radius)

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self(grid.x), 0.0, 0.0)

    @classmethod
    def unit_mass(cls, h: float, center: float = 0.0, radius: float = 0.5) -> "BumpSpec":
        """Height chosen so that the discrete mass on the lattice h*Z is exactly one."""
        k = np.arange(-int(math.ceil(radius / h)) - 1, int(math.ceil(radius / h)) + 2)
        total = h * math.fsum(standard_bump((k * h - center) / radius).tolist())
        return cls(center, radius, 1.0 / total)


def _time_weights(order: int = 8):
    """Gauss-Legendre nodes on (0, 1) with weights proportional to a bump in time, summing to one."""
    x, w = roots_legendre(order)
    tau = 0.5 * (x + 1.0)
    wt = w * standard_bump(2.0 * tau - 1.0)
    return tau, wt / wt.sum()


@dataclass(frozen=True)
class MollifierSpec:
    """Space scale epsilon for omega_eps and space-time scale delta for rho_delta (time support delta^2)."""

    epsilon: float = 0.1
    delta: float = 0.1
    time_order: int = 8

    def omega(self, h: float, scale: float | None = None) -> GridFunction:
        """Discrete symmetric mollifier of radius `scale` (default epsilon) with unit discrete mass."""
        s = self.epsilon if scale is None else scale
        half = max(int(math.ceil(s / h)), 1)
        g = Grid.centered(half, h)
        vals = standard_bump(g.x / s)
        vals = 0.5 * (vals + vals[::-1])
        if vals.sum() == 0.0:
            vals[half] = 1.0
        return GridFunction(g, vals / (h * vals.sum()), 0.0, 0.0)

    def time_nodes(self):
        tau, w = _time_weights(self.time_order)
        return self.delta**2 * tau, w


@dataclass(frozen=True, eq=False)
class DualSolution:
    grid: Grid
    times: np.ndarray
    values: np.ndarray
    op: OperatorKind
    bump: BumpSpec
    T_tilde: float
    dt_used: float
    weights: OperatorWeights
    steps: int = 0

    @property
    def snapshots(self) -> list[tuple[float, GridFunction]]:
        return [(float(t), GridFunction(self.grid, v, 0.0, 0.0)) for t, v in zip(self.times, self.values)]

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.times))) if len(self.times) > 1 else 0.0

    def initial(self) -> GridFunction:
        return GridFunction(self.grid, self.values[0], 0.0, 0.0)

    def values_at(self, t: float) -> np.ndarray:
        """Linear interpolation in time; Phi is extended by Phi_0 for t < 0."""
        if t <= 0.0:
            return self.values[0].copy()
        if t > self.T_tilde * (1.0 + 1e-12):
            raise TimeOutOfRange(f"t={t} beyond the dual horizon {self.T_tilde}")
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(max(j, 0), len(self.times) - 2)
        t0, t1 = self.times[j], self.times[j + 1]
        lam = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        if lam == 0.0:
            return self.values[j].copy()
        if lam == 1.0:
            return self.values[j + 1].copy()
        return (1.0 - lam) * self.values[j] + lam * self.values[j + 1]

    def at(self, t: float) -> GridFunction:
        return GridFunction(self.grid, self.values_at(t), 0.0, 0.0)

    def reflected_at(self, t: float) -> GridFunction:
        """Phi(-x, t); exact reversal because the dual grid is symmetric."""
        return self.at(t).reflect()

    def l1_mass(self, t: float) -> float:
        return float(self.grid.h * np.sum(np.abs(self.values_at(t))))


def dual_cfl(weights: OperatorWeights, h: float, safety: float = SAFETY) -> float | None:
    denom = 2.0 * weights.local_coeff / (h * h) + weights.total_jump_mass + abs(weights.drift) / h
    return None if denom == 0.0 else safety / denom


def solve_dual(
    bump: BumpSpec, op: OperatorKind, grid: Grid, T_tilde: float, n_snapshots: int = 101,
    split_r: float | None = None, exp_rate: float | None = None, safety: float = SAFETY,
    dt: float | None = None,
) -> DualSolution:
    """Explicit monotone scheme Phi <- Phi + dt * max(L*_h Phi, 0) with upwinded drift."""
    if not op.is_local and not op.adjoint:
        raise ValueError("the dual equation uses the adjoint operator")
    if exp_rate is not None and not op.is_local:
        try:
            levy.assert_tempered(op.effective_measure(), exp_rate)
        except levy.Divergent as exc:
            raise NotTempered(str(exc)) from exc
    if n_snapshots < 2:
        raise ValueError("need at least two snapshots")
    h = grid.h
    weights = gops.discretize(op, grid, split_r)
    dt_max = dual_cfl(weights, h, safety)
    if dt is None:
        dt = T_tilde if dt_max is None else dt_max
    elif dt_max is not None and dt > dt_max * (1.0 + 1e-12):
        raise CflViolation(f"dt={dt} exceeds the monotone bound {dt_max}")
    targets = np.linspace(0.0, T_tilde, n_snapshots)
    phi = bump.on(grid).values
    out = [phi]
    t = 0.0
    steps = 0
    for target in targets[1:]:
        while t < target:
            if target - t <= dt * (1.0 + 1e-12):
                tau, t_next = target - t, float(target)
            else:
                tau, t_next = dt, t + dt
            phi = phi + tau * np.maximum(gops.apply_arrays(weights, phi, 0.0, 0.0, "upwind"), 0.0)
            t = t_next
            steps += 1
        out.append(phi)
    return DualSolution(grid, targets, np.array(out), op, bump, float(T_tilde), float(dt), weights, steps)


def dual_grid_for(h: float, half_width: float) -> Grid:
    return Grid.centered(int(math.ceil(half_width / h)), h)


# --- spectral kernel -------------------------------------------------------


def _image_estimate(alpha: float, t: float, L: float, A: float) -> float:
    """Pointwise bound on the periodic images of the kernel seen inside [-A, A]."""
    D = L - A
    if D <= 0.0:
        return math.inf
    if alpha == 2.0:
        return 2.0 * (4.0 * math.pi * t) ** -0.5 * math.exp(-D * D / (4.0 * t)) * (1.0 + 2.0 * t / (D * L))
    c = levy.fractional_laplacian_constant(alpha)
    return 2.0 * t * c * (D ** (-1.0 - alpha) + D ** (-alpha) / (alpha * L))


def _dropped_frequency_estimate(alpha: float, t: float, h: float) -> float:
    """Symbol mass beyond the Nyquist frequency; bounds the pointwise truncation error."""
    nyq = 0.5 / h
    return 2.0 * levy._quad(lambda xi: math.exp(-t * (2.0 * math.pi * xi) ** alpha), nyq, math.inf)


@dataclass(frozen=True, eq=False)
class KernelInfo:
    alpha: float
    t: float
    widen: int
    alias_estimate: float
    frequency_estimate: float
    mass_widened: float
    mass_on_grid: float
    min_value: float


def heat_kernel_info(
    alpha: float, t: float, grid: Grid, alias_tol: float = 1e-6, widen: int | None = None,
    max_widen: int = 4096,
) -> tuple[GridFunction, KernelInfo]:
    """Kernel with Fourier symbol exp(-t |2 pi xi|^alpha) sampled at the grid centres.

    The periodic DFT lives on a domain `widen` times longer than the grid, with
    the same cell width, and is then restricted.  With widen=None the factor is
    doubled from 4 until the periodic-image estimate is below alias_tol.  The
    error from dropping frequencies past Nyquist depends on h alone and is reported.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if t <= 0.0:
        raise ValueError("t must be positive")
    h, n = grid.h, grid.n
    A = max(abs(grid.x_min), abs(grid.x_max))
    if widen is None:
        widen = 4
        while _image_estimate(alpha, t, widen * n * h, A) > alias_tol:
            widen *= 2
            if widen > max_widen:
                raise DomainTooSmall(
                    f"kernel tail needs a periodic domain wider than {max_widen}x the grid"
                )
    est = _image_estimate(alpha, t, widen * n * h, A)
    N = widen * n
    xi = np.fft.fftfreq(N, d=h)
    symbol = np.exp(-t * np.abs(2.0 * np.pi * xi) ** alpha)
    x0 = grid.x[0]
    full = np.fft.ifft(symbol * np.exp(2j * np.pi * xi * x0)).real / h
    vals = full[:n].copy()
    if math.isclose(grid.x_min, -grid.x_max, rel_tol=0.0, abs_tol=1e-12 * h):
        vals = 0.5 * (vals + vals[::-1])
    vmin = float(vals.min())
    if vmin < -1e-9:
        raise SpectralNegativity(f"kernel dips to {vmin:.3e}")
    vals = np.maximum(vals, 0.0)
    info = KernelInfo(alpha, t, widen, est, _dropped_frequency_estimate(alpha, t, h), float(h * math.fsum(full.tolist())), float(h * vals.sum()), vmin)
    return GridFunction(grid, vals, 0.0, 0.0), info


def heat_kernel(alpha: float, t: float, grid: Grid, **kwargs) -> GridFunction:
    return heat_kernel_info(alpha, t, grid, **kwargs)[0]


def heat_kernel_outside_mass(alpha: float, t: float, A: float) -> float:
    """Kernel mass outside [-A, A]: exact for alpha in {1, 2}, leading-order tail otherwise."""
    if alpha == 2.0:
        return float(erfc(A / (2.0 * math.sqrt(t))))
    if alpha == 1.0:
        return 1.0 - 2.0 / math.pi * math.atan(A / t)
    return 2.0 * t * levy.fractional_laplacian_constant(alpha) / (alpha * A**alpha)


def gaussian_kernel(x, t):
    return np.exp(-np.square(x) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


def poisson_kernel(x, t):
    return t / (math.pi * (t * t + np.square(x)))


# --- exponential supersolution ---------------------------------------------


@dataclass(frozen=True)
class ExpBoundReport:
    max_violation: float
    worst_time: float
    worst_x: float
    tolerance: float
    constant: float
    h: float
    dt: float
    consts: SupersolutionConstants

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


def exp_bound_tolerance(sol: DualSolution, consts: SupersolutionConstants) -> tuple[float, float]:
    k, K, C = consts.k, consts.K, consts.C
    C_spec = C * math.exp(K * sol.T_tilde) * sol.T_tilde * (1.0 + k) ** 2
    return C_spec * (sol.grid.h + sol.dt_used), C_spec


def exp_supersolution_check(sol: DualSolution, consts: SupersolutionConstants) -> ExpBoundReport:
    """Worst Phi - C e^{Kt} e^{-k|x - center|} over all snapshots and cells."""
    x = sol.grid.x
    decay = np.exp(-consts.k * np.abs(x - sol.bump.center))
    worst, wt, wx = -math.inf, 0.0, 0.0
    for t, v in zip(sol.times, sol.values):
        gap = v - consts.C * math.exp(consts.K * t) * decay
        i = int(np.argmax(gap))
        if gap[i] > worst:
            worst, wt, wx = float(gap[i]), float(t), float(x[i])
    tol, C_spec = exp_bound_tolerance(sol, consts)
    return ExpBoundReport(worst, wt, wx, tol, C_spec, sol.grid.h, sol.dt_used, consts)


def certificate(sol: DualSolution, report: ExpBoundReport) -> dict:
    c = report.consts
    return {
        "k": c.k, "K": c.K, "C": c.C, "C_k": c.C_k,
        "max_violation": report.max_violation,
        "worst_time": report.worst_time,
        "worst_x": report.worst_x,
        "tolerance": report.tolerance,
        "tolerance_formula": "C*exp(K*T_tilde)*T_tilde*(1+k)^2*(h+dt)",
        "h": report.h,
        "dt": report.dt,
        "T_tilde": sol.T_tilde,
        "operator": sol.op.describe(),
        "bump": {"center": sol.bump.center, "radius": sol.bump.radius, "height": sol.bump.height},
        "passed": report.passed,
    }


# --- mollified kernel and cutoffs ------------------------------------------


def phi_delta(sol: DualSolution, s: float, moll: MollifierSpec) -> GridFunction:
    """Space-time mollification of Phi at time s: time part on (s - delta^2, s), space part omega_delta."""
    taus, w = moll.time_nodes()
    acc = np.zeros(sol.grid.n)
    for tq, wq in zip(taus, w):
        acc += wq * sol.values_at(s - tq)
    return gops.convolve(GridFunction(sol.grid, acc, 0.0, 0.0), moll.omega(sol.grid.h, moll.delta))


def k_delta(sol: DualSolution, tau: float, L_phi: float, t: float, moll: MollifierSpec) -> GridFunction:
    """K_delta(x, t) = Phi_delta(x, L_phi (tau - t)) for 0 <= t <= tau."""
    if tau <= 0.0 or t < 0.0 or t > tau * (1.0 + 1e-14):
        raise TimeOutOfRange("need 0 < tau and 0 <= t <= tau")
    if L_phi * tau > sol.T_tilde * (1.0 + 1e-12):
        raise TimeOutOfRange("L_phi * tau exceeds the dual horizon")
    return phi_delta(sol, L_phi * max(tau - t, 0.0), moll)


def k_delta_initial_error(sol: DualSolution, tau: float, L_phi: float, moll: MollifierSpec) -> float:
    """sup |K_delta(., tau) - Phi_0| on the dual grid."""
    kd = k_delta(sol, tau, L_phi, tau, moll)
    return float(np.max(np.abs(kd.values - sol.values[0])))


def _omega_cdf_table(n: int = 4097):
    s = np.linspace(-1.0, 1.0, n)
    dens = standard_bump(s)
    gx, gw = roots_legendre(16)
    pieces = np.empty(n - 1)
    for i in range(n - 1):
        a, b = s[i], s[i + 1]
        pieces[i] = 0.5 * (b - a) * float(np.dot(gw, standard_bump(0.5 * (b - a) * gx + 0.5 * (a + b))))
    cdf = np.concatenate([[0.0], np.cumsum(pieces)])
    total = cdf[-1]
    return CubicHermiteSpline(s, cdf / total, dens / total), 1.0 / total


_OMEGA_CDF, _OMEGA_NORM = _omega_cdf_table()


def omega_density(s):
    return _OMEGA_NORM * standard_bump(s)


def omega_cdf(s):
    s = np.asarray(s, dtype=float)
    out = np.clip(_OMEGA_CDF(np.clip(s, -1.0, 1.0)), 0.0, 1.0)
    return np.where(s <= -1.0, 0.0, np.where(s >= 1.0, 1.0, out))


def smoothed_step(S, R: float, eps: float):
    """[1_(-inf, R] * omega_eps](S) = 1 - Omega((S - R)/eps)."""
    return 1.0 - omega_cdf((np.asarray(S, dtype=float) - R) / eps)


def smoothed_step_slope(S, R: float, eps: float):
    return -omega_density((np.asarray(S, dtype=float) - R) / eps) / eps


def _gamma_radius(x, x0, tilde_delta):
    return np.sqrt(tilde_delta**2 + np.square(np.asarray(x, dtype=float) - x0))


def gamma_cutoff(
    x0: float, R: float, L_f: float, eps: float, tilde_delta: float, t: float, grid: Grid,
    T: float | None = None,
) -> GridFunction:
    """Smoothed indicator of the shrinking ball |x - x0| + L_f t <= R."""
    if eps <= 0.0 or eps >= 1.0:
        raise ValueError("need 0 < eps < 1")
    if T is not None and not R > L_f * T + 1.0:
        raise ValueError("need R > L_f*T + 1")
    S = _gamma_radius(grid.x, x0, tilde_delta) + L_f * t
    return GridFunction(grid, smoothed_step(S, R, eps), 0.0, 0.0)


@dataclass(frozen=True)
class GammaResidual:
    analytic_max: float
    difference_max: float
    cells_in_band: int

    @property
    def worst(self) -> float:
        return max(self.analytic_max, self.difference_max)


def gamma_transport_residual(
    x0: float, R: float, L_f: float, eps: float, tilde_delta: float, t: float, grid: Grid,
) -> GammaResidual:
    """max of d_t gamma + L_f |D gamma| at the cell centres.

    Two evaluations: chain-rule derivatives, and one-sided differences taken
    outward from x0 with the time step h / L_f matched to the transport speed.
    """
    x, h = grid.x, grid.h
    rad = _gamma_radius(x, x0, tilde_delta)
    S = rad + L_f * t
    slope = smoothed_step_slope(S, R, eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        dir_ = np.where(rad > 0.0, np.abs(x - x0) / np.where(rad > 0.0, rad, 1.0), 1.0)
    analytic = L_f * slope + L_f * np.abs(slope) * dir_
    if L_f > 0.0:
        dt = h / L_f
        out = np.where(x >= x0, 1.0, -1.0)
        g_now = smoothed_step(S, R, eps)
        g_next = smoothed_step(rad + L_f * (t + dt), R, eps)
        g_out = smoothed_step(_gamma_radius(x + out * h, x0, tilde_delta) + L_f * t, R, eps)
        diff = (g_next - g_now) / dt + L_f * np.abs(g_out - g_now) / h
    else:
        diff = np.zeros_like(x)
    band = int(np.sum(np.abs(S - R) < eps))
    return GammaResidual(float(np.max(analytic)), float(np.max(diff)), band)


def gamma_test_function(kd, gamma) -> list[tuple[float, GridFunction]]:
    """Gamma(., t) = K_delta(., t) * gamma(., t) for matching snapshot lists [(t, f), ...]."""
    if len(kd) != len(gamma) or any(abs(a[0] - b[0]) > 1e-12 * max(1.0, abs(a[0])) for a, b in zip(kd, gamma)):
        raise SnapshotMismatch("K_delta and gamma snapshots must share their times")
    return [(t, gops.convolve(g, k)) for (t, k), (_, g) in zip(kd, gamma)]


@dataclass(frozen=True)
class GammaSubsolutionReport:
    max_residual: float
    budget: float
    constant: float
    h: float
    dt: float
    delta: float
    worst_time: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.budget


def gamma_subsolution_residual(
    Gamma, L_f: float, L_phi: float, adjoint_weights: OperatorWeights, delta: float,
) -> GammaSubsolutionReport:
    """Forward-in-time residual d_t Gamma + L_f |D Gamma| + L_phi (L* Gamma)^+ on the snapshots.

    |D Gamma| takes the larger one-sided difference.  The budget constant is
    read off the computed Gamma: second differences in time and space plus sup Gamma.
    """
    times = np.array([t for t, _ in Gamma])
    vals = np.array([g.values for _, g in Gamma])
    h = Gamma[0][1].grid.h
    dts = np.diff(times)
    worst, wt = -math.inf, 0.0
    for j in range(len(times) - 1):
        gj = Gamma[j][1]
        ext = gops.extended(gj, 1)
        grad = np.maximum(np.abs(ext[2:] - ext[1:-1]), np.abs(ext[1:-1] - ext[:-2])) / h
        diff = np.maximum(gops.apply_values(adjoint_weights, gj, "upwind"), 0.0)
        r = (vals[j + 1] - vals[j]) / dts[j] + L_f * grad + L_phi * diff
        m = float(np.max(r))
        if m > worst:
            worst, wt = m, float(times[j])
    d2t = 0.0
    if len(times) > 2:
        d2t = float(np.max(np.abs(np.diff(vals, 2, axis=0)))) / float(np.min(dts)) ** 2
    d2x = float(np.max(np.abs(np.diff(vals, 2, axis=1)))) / h**2
    op_scale = 2.0 * adjoint_weights.local_coeff + adjoint_weights.total_jump_mass + abs(adjoint_weights.drift)
    C = d2t + (L_f + L_phi * (1.0 + op_scale)) * d2x + float(np.max(vals))
    dt = float(np.max(dts))
    return GammaSubsolutionReport(worst, C * (h + dt + delta), C, h, dt, delta, wt)
