import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from l1contract import grid as G
from l1contract import levy
from l1contract.errors import BallExceedsDomain, KernelNotIntegrable, SplitTooSmall
from l1contract.levy import Atomic, OperatorKind, Stable, TemperedStable

# -(-Lap)^(alpha/2) exp(-x^2) at x = 0, 0.5, 1, 2 from mpmath:
# -(4^s Gamma(1/2+s)/Gamma(1/2)) 1F1(1/2+s; 1/2; -x^2) with s = alpha/2
FRAC_GAUSS = {
    0.5: [-0.97774106744692386, -0.65996857132178027, -0.12193243238305665, 0.14983541828403173],
    1.0: [-1.1283791670955126, -0.6494539941944691, 0.085936244587274884, 0.23172570116875223],
    1.5: [-1.4464090846320772, -0.69485785540257815, 0.34572695420337133, 0.26851189807221384],
}


def test_grid_centres_and_ball_mask():
    g = G.Grid(-1.0, 1.0, 4)
    assert np.allclose(g.x, [-0.75, -0.25, 0.25, 0.75])
    assert g.ball_mask(0.0, 0.5).tolist() == [False, True, True, False]
    with pytest.raises(BallExceedsDomain):
        g.ball_mask(0.8, 0.5)
    c = G.Grid.centered(3, 0.1)
    assert c.n == 7 and np.allclose(c.x, 0.1 * np.arange(-3, 4))
    assert c.lattice_offset() == -3


def test_gridfunction_far_fields_and_shift():
    g = G.Grid(0.0, 4.0, 4)
    f = G.GridFunction(g, [1.0, 2.0, 3.0, 4.0], 0.0, 9.0)
    assert f.shift(1).values.tolist() == [2.0, 3.0, 4.0, 9.0]
    assert f.shift(-2).values.tolist() == [0.0, 0.0, 1.0, 2.0]
    assert G.extended(f, 2).tolist() == [0, 0, 1, 2, 3, 4, 9, 9]
    assert G.bv_seminorm(f) == pytest.approx(1 + 1 + 1 + 1 + 5)
    p = (f - G.GridFunction.constant(g, 2.5)).positive_part()
    assert p.values.tolist() == [0.0, 0.0, 0.5, 1.5] and p.far_left == 0.0 and p.far_right == 6.5


def test_csv_roundtrip(tmp_path):
    g = G.Grid(-1.0, 1.0, 5)
    f = G.GridFunction.sample(g, np.sin, 0.25, -0.5)
    f.to_csv(tmp_path / "f.csv")
    back = G.GridFunction.from_csv(tmp_path / "f.csv")
    assert np.array_equal(back.values, f.values) and back.far_left == 0.25 and back.far_right == -0.5


def test_weights_sign_structure_and_split_guard():
    g = G.Grid(-5.0, 5.0, 400)
    for mu in (Stable(1.0), TemperedStable(1.0, 2.0), Atomic(((0.7, 1.0), (-2.0, 0.5)))):
        w = G.discretize(OperatorKind.levy(mu), g)
        print(type(mu).__name__, w.summary())
        assert w.local_coeff >= 0.0 and np.all(w.weights > 0.0) and not np.any(w.offsets == 0)
    with pytest.raises(SplitTooSmall):
        G.discretize(OperatorKind.levy(Stable(1.0)), g, split_r=0.001)


def test_operator_kills_constants():
    g = G.Grid(-5.0, 5.0, 300)
    c = G.GridFunction.constant(g, 0.7)
    for op in (OperatorKind.laplacian(), OperatorKind.levy(Stable(0.6)), OperatorKind.levy(Atomic(((1.3, 1.0),)))):
        w = G.discretize(op, g)
        assert np.max(np.abs(G.apply(w, c).values)) < 1e-12
        assert np.max(np.abs(G.apply_upwind(w, c).values)) < 1e-12


def test_laplacian_second_difference():
    g = G.Grid.centered(50, 0.1)
    f = G.GridFunction.sample(g, lambda x: x**2, 0.0, 0.0)
    w = G.discretize(OperatorKind.laplacian(), g)
    inner = G.apply(w, f).values[1:-1]
    assert np.allclose(inner, 2.0, atol=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_fractional_laplacian_of_gaussian(alpha):
    """Discrete operator against the hypergeometric closed form; error shrinks with h."""
    mu = levy.fractional_laplacian(alpha)
    errs = []
    for h in (0.05, 0.025, 0.0125):
        g = G.Grid.centered(int(round(20.0 / h)), h)
        f = G.GridFunction.sample(g, lambda x: np.exp(-x * x))
        Lf = G.apply(G.discretize(OperatorKind.levy(mu), g), f).values
        idx = [int(round((x - g.x[0]) / h)) for x in (0.0, 0.5, 1.0, 2.0)]
        errs.append(float(np.max(np.abs(Lf[idx] - FRAC_GAUSS[alpha]))))
    print(alpha, errs)
    assert errs[-1] < 1.5e-3
    assert errs[2] < errs[0]


def test_fft_and_direct_jump_sums_agree():
    g = G.Grid(-10.0, 10.0, 2000)
    w = G.discretize(OperatorKind.levy(TemperedStable(1.0, 2.0)), g)
    assert len(w.offsets) > G._FFT_JUMPS
    rng = np.random.default_rng(1)
    vals = rng.normal(size=g.n)
    fast = G._jump_sum(w, vals, 0.3, -0.2)
    K = w.max_offset
    ext = np.concatenate([np.full(K, 0.3), vals, np.full(K, -0.2)])
    slow = np.zeros(g.n)
    for m, wt in zip(w.offsets, w.weights):
        slow += wt * (ext[K + m: K + m + g.n] - vals)
    print("max diff", np.max(np.abs(fast - slow)))
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_adjoint_is_transpose():
    """sum (L f) g = sum f (L* g) for compactly supported f, g."""
    g = G.Grid(-6.0, 6.0, 240)
    mu = Atomic(((0.55, 1.0), (1.7, 0.3), (-0.9, 0.6)))
    w = G.discretize(OperatorKind.levy(mu), g, split_r=0.1)
    ws = G.discretize(OperatorKind.levy(mu, adjoint=True), g, split_r=0.1)
    f = G.GridFunction.sample(g, lambda x: np.exp(-4 * x * x))
    k = G.GridFunction.sample(g, lambda x: np.exp(-3 * (x - 0.5) ** 2))
    lhs = float(np.dot(G.apply(w, f).values, k.values))
    rhs = float(np.dot(f.values, G.apply(ws, k).values))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_convolve_with_delta_and_far_fields():
    g = G.Grid(-2.0, 2.0, 40)
    kg = G.Grid.centered(2, g.h)
    delta = G.GridFunction(kg, [0, 0, 1.0 / g.h, 0, 0])
    f = G.GridFunction.sample(g, np.cos, 1.0, 2.0)
    out = G.convolve(f, delta)
    assert np.allclose(out.values, f.values) and out.far_left == 1.0 and out.far_right == 2.0
    shifted = G.convolve(f, G.GridFunction(kg, [0, 0, 0, 1.0 / g.h, 0]))
    assert np.allclose(shifted.values, f.shift(-1).values)
    with pytest.raises(KernelNotIntegrable):
        G.convolve(f, G.GridFunction(kg, np.ones(5), 1.0, 0.0))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 30, elements=st.floats(-5, 5)), arrays(np.float64, 7, elements=st.floats(0, 3)))
def test_convolution_inequalities_property(fv, gv):
    g = G.Grid(-1.5, 1.5, 30)
    f = G.GridFunction(g, fv, 0.0, 0.0)
    k = G.GridFunction(G.Grid.centered(3, g.h), gv)
    conv = G.convolve(f, k).values
    assert np.all(np.maximum(conv, 0.0) <= G.convolve(f.positive_part(), k).values + 1e-14)
    assert np.all(np.abs(conv) <= G.convolve(f.map(np.abs), k).values + 1e-14)


@pytest.mark.parametrize("mu", [Atomic(((0.3, 2.0), (-1.5, 1.0), (2.5, 0.5))), Stable(1.0), TemperedStable(1.0, 2.0)])
def test_operator_l1_bounds(mu):
    op = OperatorKind.levy(mu)
    for n in (500, 1000):
        g = G.Grid(-6.0, 6.0, n)
        f = G.GridFunction.sample(g, lambda x: np.exp(1 - 1 / np.maximum(1 - x * x, 1e-300)) * (np.abs(x) < 1))
        for r in (0.5, 2.0):
            rep = G.operator_l1_bound_check(G.discretize(op, g, r), f, op)
            print(type(mu).__name__, n, r, rep)
            assert rep.passed


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 1.8), st.integers(50, 300))
def test_total_weight_mass_matches_tail(alpha, n):
    """Aggregated jump weights carry the measure's mass beyond the split radius."""
    g = G.Grid(-10.0, 10.0, n)
    mu = TemperedStable(alpha, 1.5)
    w = G.discretize(OperatorKind.levy(mu), g)
    assert w.total_jump_mass + w.truncated_mass == pytest.approx(levy.tail_mass(mu, w.split_r), rel=1e-9)
    assert w.local_coeff == pytest.approx(0.5 * levy.second_moment_near(mu, w.split_r))
    assert w.split_r == G.default_split(g.h) == max(g.h, math.sqrt(g.h))
