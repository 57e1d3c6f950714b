"""Uniform 1-D grids, grid functions with constant far fields, and the discrete operator.

The discrete operator is

    (L f)_i = a (f_{i+1} - 2 f_i + f_{i-1}) / h^2 + sum_j w_j (f_{i+m_j} - f_i) + b D f_i

with a >= 0 and w_j > 0, which is what makes explicit schemes built on it monotone.
Indices falling outside the grid read the far-field constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve
from scipy.special import roots_jacobi

from . import levy
from .errors import BallExceedsDomain, KernelNotIntegrable, SplitTooSmall

JUMP_TAIL_TOL = 1e-12
_DENSE_JUMPS = 24
_FFT_JUMPS = 256


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 1 or not self.x_max > self.x_min:
            raise ValueError("need n >= 1 and x_max > x_min")

    @classmethod
    def centered(cls, half_cells: int, h: float) -> "Grid":
        """Odd grid whose cell centers are the lattice points k*h, |k| <= half_cells."""
        return cls(-(half_cells + 0.5) * h, (half_cells + 0.5) * h, 2 * half_cells + 1)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n) + 0.5) * self.h

    def lattice_offset(self) -> int:
        """Index shift s such that the first center sits at (approximately) s*h."""
        return int(round(self.x[0] / self.h))

    def ball_mask(self, center: float, radius: float) -> np.ndarray:
        if center - radius < self.x_min or center + radius > self.x_max:
            raise BallExceedsDomain(
                f"ball ({center} +- {radius}) not inside [{self.x_min}, {self.x_max}]"
            )
        return np.abs(self.x - center) < radius


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    far_left: float = 0.0
    far_right: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "far_left", float(self.far_left))
        object.__setattr__(self, "far_right", float(self.far_right))

    @classmethod
    def sample(cls, grid: Grid, fn, far_left: float = 0.0, far_right: float = 0.0) -> "GridFunction":
        return cls(grid, fn(grid.x), far_left, far_right)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.n, float(c)), c, c)

    def map(self, fn) -> "GridFunction":
        """Apply a pointwise function to values and far fields alike."""
        return GridFunction(self.grid, fn(self.values), float(fn(np.float64(self.far_left))), float(fn(np.float64(self.far_right))))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values + other.values, self.far_left + other.far_left, self.far_right + other.far_right)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values - other.values, self.far_left - other.far_left, self.far_right - other.far_right)

    def scale(self, a: float) -> "GridFunction":
        return GridFunction(self.grid, a * self.values, a * self.far_left, a * self.far_right)

    def positive_part(self) -> "GridFunction":
        return self.map(lambda v: np.maximum(v, 0.0))

    def reflect(self) -> "GridFunction":
        """x -> -x on a grid symmetric about the origin."""
        g = self.grid
        if not math.isclose(g.x_min, -g.x_max, rel_tol=0.0, abs_tol=1e-12 * g.h):
            raise ValueError("reflection needs a grid symmetric about 0")
        return GridFunction(g, self.values[::-1], self.far_right, self.far_left)

    def shift(self, cells: int) -> "GridFunction":
        """x -> f(x + cells*h), reading far fields past the ends."""
        return GridFunction(self.grid, extended(self, abs(cells))[abs(cells) + cells: abs(cells) + cells + self.grid.n], self.far_left, self.far_right)

    def to_csv(self, path: str | Path) -> None:
        g = self.grid
        lines = [
            f"# far_left={self.far_left!r} far_right={self.far_right!r} x_min={g.x_min!r} x_max={g.x_max!r} n={g.n}",
            "x,value",
        ]
        lines += [f"{x!r},{v!r}" for x, v in zip(g.x.tolist(), self.values.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "GridFunction":
        text = Path(path).read_text().splitlines()
        meta = dict(item.split("=") for item in text[0].lstrip("# ").split())
        grid = Grid(float(meta["x_min"]), float(meta["x_max"]), int(meta["n"]))
        vals = [float(line.split(",")[1]) for line in text[2:] if line]
        return cls(grid, np.array(vals), float(meta["far_left"]), float(meta["far_right"]))


def extended(f: GridFunction, pad: int) -> np.ndarray:
    """Values padded by `pad` far-field copies on each side."""
    return np.concatenate([np.full(pad, f.far_left), f.values, np.full(pad, f.far_right)])


@dataclass(frozen=True, eq=False)
class OperatorWeights:
    local_coeff: float
    jumps: tuple[tuple[int, float], ...]
    total_jump_mass: float
    drift: float
    split_r: float
    h: float
    truncated_mass: float = 0.0
    offsets: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.local_coeff < 0.0:
            raise ValueError("local_coeff must be nonnegative")
        offs = np.array([m for m, _ in self.jumps], dtype=np.int64)
        ws = np.array([w for _, w in self.jumps], dtype=float)
        if np.any(offs == 0) or np.any(ws <= 0.0):
            raise ValueError("jumps need non-zero offsets and positive weights")
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "weights", ws)

    @property
    def max_offset(self) -> int:
        return int(np.max(np.abs(self.offsets))) if len(self.offsets) else 0

    def reflected(self) -> "OperatorWeights":
        return OperatorWeights(
            self.local_coeff, tuple((-m, w) for m, w in self.jumps), self.total_jump_mass,
            -self.drift, self.split_r, self.h, self.truncated_mass,
        )

    def summary(self) -> dict:
        return {
            "local_coeff": self.local_coeff,
            "n_jumps": len(self.jumps),
            "max_offset": self.max_offset,
            "total_jump_mass": self.total_jump_mass,
            "drift": self.drift,
            "split_r": self.split_r,
            "truncated_mass": self.truncated_mass,
        }


def default_split(h: float) -> float:
    return max(h, math.sqrt(h))


def _half_line_jumps(mu, r: float, h: float, n: int) -> tuple[list[tuple[int, float]], float]:
    """Cell-aggregated weights of the positive half beyond r, plus the neglected mass."""
    if isinstance(mu, levy.Atomic):
        cells: dict[int, list[float]] = {}
        for z, w in mu.atoms:
            if z > r:
                m = min(max(1, math.ceil(z / h - 0.5)), n)
                cells.setdefault(m, []).append(w)
        return [(m, math.fsum(ws)) for m, ws in sorted(cells.items())], 0.0
    remaining = levy.half_line_mass(mu, r, math.inf)
    out = []
    m = max(1, math.ceil(r / h - 0.5))
    while remaining >= 0.5 * JUMP_TAIL_TOL:
        lo = max(r, (m - 0.5) * h)
        if m >= n:
            # every offset past the domain reads the far field; lump the rest there
            w = levy.half_line_mass(mu, lo, math.inf)
            remaining = 0.0
        else:
            w = levy.half_line_mass(mu, lo, (m + 0.5) * h)
            remaining -= w
        if w > 0.0:
            out.append((m, w))
        m += 1
    return out, max(remaining, 0.0)


def discretize(op: levy.OperatorKind, grid: Grid, split_r: float | None = None) -> OperatorWeights:
    """Discrete weights for the Laplacian or a (possibly reflected) Levy operator."""
    h = grid.h
    if op.is_local:
        return OperatorWeights(1.0, (), 0.0, 0.0, split_r or h, h)
    r = default_split(h) if split_r is None else float(split_r)
    if r < h * (1.0 - 1e-12):
        raise SplitTooSmall(f"split_r={r} below cell width {h}")
    mu = op.effective_measure()
    pos, lost_p = _half_line_jumps(mu, r, h, grid.n)
    neg, lost_n = _half_line_jumps(mu.reflect(), r, h, grid.n)
    jumps = tuple((-m, w) for m, w in reversed(neg)) + tuple(pos)
    return OperatorWeights(
        local_coeff=0.5 * levy.second_moment_near(mu, r),
        jumps=jumps,
        total_jump_mass=math.fsum(w for _, w in jumps),
        drift=levy.drift_correction(mu, r),
        split_r=r,
        h=h,
        truncated_mass=lost_p + lost_n,
    )


def _pad(vals: np.ndarray, fl: float, fr: float, pad: int) -> np.ndarray:
    return np.concatenate([np.full(pad, fl), vals, np.full(pad, fr)])


def _jump_sum(w: OperatorWeights, vals: np.ndarray, fl: float, fr: float) -> np.ndarray:
    n = len(vals)
    if not len(w.offsets):
        return np.zeros(n)
    K = w.max_offset
    ext = _pad(vals, fl, fr, K)
    if len(w.offsets) <= _DENSE_JUMPS:
        acc = np.zeros(n)
        for m, wt in zip(w.offsets.tolist(), w.weights.tolist()):
            acc += wt * (ext[K + m: K + m + n] - vals)
        return acc
    kernel = np.zeros(2 * K + 1)
    kernel[w.offsets + K] = w.weights
    if len(w.offsets) <= _FFT_JUMPS:
        return np.correlate(ext, kernel, mode="valid") - w.total_jump_mass * vals
    return fftconvolve(ext, kernel[::-1], mode="valid") - w.total_jump_mass * vals


def apply_arrays(w: OperatorWeights, vals: np.ndarray, fl: float, fr: float, drift_mode: str = "centered") -> np.ndarray:
    """Operator on raw cell values with constant far fields fl, fr."""
    h = w.h
    ext = _pad(vals, fl, fr, 1)
    out = _jump_sum(w, vals, fl, fr)
    if w.local_coeff:
        out = out + w.local_coeff * (ext[2:] - 2.0 * ext[1:-1] + ext[:-2]) / (h * h)
    if w.drift:
        if drift_mode == "centered":
            out = out + w.drift * (ext[2:] - ext[:-2]) / (2.0 * h)
        elif w.drift > 0.0:
            out = out + w.drift * (ext[2:] - ext[1:-1]) / h
        else:
            out = out + w.drift * (ext[1:-1] - ext[:-2]) / h
    return out


def apply_values(w: OperatorWeights, f: GridFunction, drift_mode: str = "centered") -> np.ndarray:
    return apply_arrays(w, f.values, f.far_left, f.far_right, drift_mode)


def apply(w: OperatorWeights, f: GridFunction) -> GridFunction:
    """Discrete operator with the centered drift; the result has zero far fields."""
    return GridFunction(f.grid, apply_values(w, f, "centered"), 0.0, 0.0)


def apply_upwind(w: OperatorWeights, f: GridFunction) -> GridFunction:
    """Discrete operator with the drift differenced against its sign (monotone form)."""
    return GridFunction(f.grid, apply_values(w, f, "upwind"), 0.0, 0.0)


def l1_norm(f: GridFunction, ball: tuple[float, float] | None = None) -> float:
    vals = np.abs(f.values)
    if ball is not None:
        vals = vals[f.grid.ball_mask(*ball)]
    return float(f.grid.h * np.sum(vals))


def integral(f: GridFunction, ball: tuple[float, float] | None = None) -> float:
    vals = f.values if ball is None else f.values[f.grid.ball_mask(*ball)]
    return float(f.grid.h * np.sum(vals))


def bv_seminorm(f: GridFunction) -> float:
    ext = extended(f, 1)
    return float(np.sum(np.abs(np.diff(ext))))


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """h * sum_j f(x_i - y_j) g(y_j) on f's grid; g is the kernel and must vanish at infinity.

    The kernel's cell centers are snapped to the lattice h*Z, which is exact for
    kernels built on `Grid.centered` grids.
    """
    if g.far_left != 0.0 or g.far_right != 0.0:
        raise KernelNotIntegrable("kernel far fields must be zero")
    h = f.grid.h
    if not math.isclose(h, g.grid.h, rel_tol=1e-9):
        raise ValueError("convolution needs equal cell widths")
    nf, ng = f.grid.n, g.grid.n
    s = g.grid.lattice_offset()
    idx = np.arange(nf + ng - 1) - s - ng + 1
    a = np.where(idx < 0, f.far_left, 0.0) + np.where(idx >= nf, f.far_right, 0.0)
    inside = (idx >= 0) & (idx < nf)
    a[inside] = f.values[idx[inside]]
    mass = h * float(np.sum(g.values))
    vals = h * np.convolve(a, g.values, mode="valid")
    return GridFunction(f.grid, vals, f.far_left * mass, f.far_right * mass)


@dataclass(frozen=True)
class L1BoundReport:
    small_lhs: float | None
    small_rhs: float | None
    large_lhs: float | None
    large_rhs: float | None
    tolerance: float

    @property
    def passed(self) -> bool:
        ok = True
        if self.small_lhs is not None:
            ok &= self.small_lhs <= self.small_rhs + self.tolerance
        if self.large_lhs is not None:
            ok &= self.large_lhs <= self.large_rhs + self.tolerance
        return bool(ok)


def small_jump_values(mu, r: float, f: GridFunction, order: int = 24) -> np.ndarray:
    """Small-jump integral of f over 0 < |z| <= r at the cell centers, f interpolated by a cubic spline."""
    g = f.grid
    ext_x = np.concatenate([[g.x_min - 2 * r - g.h], g.x, [g.x_max + 2 * r + g.h]])
    ext_v = np.concatenate([[f.far_left], f.values, [f.far_right]])
    spline = CubicSpline(ext_x, ext_v)
    x = g.x
    f0, df = spline(x), spline(x, 1)
    if isinstance(mu, levy.Atomic):
        out = np.zeros_like(x)
        for z, w in mu.atoms:
            if abs(z) <= r:
                out += w * (spline(x + z) - f0 - z * df)
        return out
    # second-difference quotient times z^2 dmu; Gauss-Jacobi nodes absorb z^(1-alpha)
    alpha = getattr(mu, "alpha", None)
    out = np.zeros_like(x)
    if alpha is not None:
        nodes, wts = roots_jacobi(order, 0.0, 1.0 - alpha)
        z = 0.5 * r * (nodes + 1.0)
        scale = (0.5 * r) ** (2.0 - alpha)
        lam = getattr(mu, "lam", 0.0)
        for zq, wq in zip(z, wts):
            sym = spline(x + zq) + spline(x - zq) - 2.0 * f0
            out += wq * scale * mu.c * math.exp(-lam * zq) * sym / (zq * zq)
        return out
    nodes, wts = np.polynomial.legendre.leggauss(order)
    z = 0.5 * r * (nodes + 1.0)
    for half, sign in ((mu, 1.0), (mu.reflect(), -1.0)):
        for zq, wq, dq in zip(z, wts, half.half_density(z)):
            out += 0.5 * r * wq * dq * (spline(x + sign * zq) - f0 - sign * zq * df)
    return out


def operator_l1_bound_check(
    weights: OperatorWeights, f: GridFunction, op: levy.OperatorKind | None = None
) -> L1BoundReport:
    """Check the small-jump bound (split_r < 1) and the large-jump bound (split_r > 1) on f.

    With a Levy `op` the small-jump part is the exact integral (spline-interpolated f);
    otherwise it is the absorbed second difference.
    """
    h = weights.h
    ext = extended(f, 1)
    d2 = (ext[2:] - 2.0 * ext[1:-1] + ext[:-2]) / (h * h)
    d2_l1 = h * float(np.sum(np.abs(d2)))
    m2 = 2.0 * weights.local_coeff
    r = weights.split_r
    small_lhs = small_rhs = large_lhs = large_rhs = None
    consts = 0.0
    if r < 1.0:
        if op is not None and not op.is_local:
            part = small_jump_values(op.effective_measure(), r, f)
        else:
            part = weights.local_coeff * d2
        small_lhs = h * float(np.sum(np.abs(part)))
        small_rhs = 0.5 * d2_l1 * m2
        consts += small_rhs
    if r > 1.0:
        large_lhs = h * float(np.sum(np.abs(_jump_sum(weights, f.values, f.far_left, f.far_right))))
        large_rhs = 2.0 * l1_norm(f) * weights.total_jump_mass
        consts += large_rhs
    return L1BoundReport(small_lhs, small_rhs, large_lhs, large_rhs, 10.0 * h * consts)
