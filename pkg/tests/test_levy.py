import math

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1contract import levy
from l1contract.errors import Divergent, NotTempered
from l1contract.levy import Atomic, OperatorKind, Stable, TabulatedDensity, TemperedStable

# frozen mpmath values (30 digits); C_k is also recomputed live by _mp_ck
TEMPERED_MOMENTS = {
    # (alpha, lam): (second moment over |z| <= 0.3, mass of |z| > 0.3)
    (1.0, 2.0): (0.45118836390597355519, 1.841226227869234587),
    (0.5, 1.0): (0.18356883869927387337, 2.300734094710328674),
    (1.5, 3.0): (1.6788442243702227859, 1.7744525342774812962),
}
STABLE_MOMENTS = {
    0.5: (0.21908902300206643322, 7.302967433402214953),
    1.0: (0.6, 6.6666666666666666667),
    1.5: (2.1908902300206643978, 8.1144082593357947239),
}
C_K_HEADLINE = 1.4721922071956455527  # tempered alpha=1, lam=2, rate 1
C_K_HALF = 1.6331264319946405417  # tempered alpha=0.5, lam=1.5, rate 1


def _mp_ck(alpha, lam, k):
    mp.mp.dps = 30
    near = 2 * mp.quad(lambda z: z**2 * mp.e ** (-lam * z) * z ** (-1 - alpha), [0, 1])
    far = 2 * mp.quad(lambda z: mp.e ** ((k - lam) * z) * z ** (-1 - alpha), [1, mp.inf])
    return float(0.5 * mp.e**k * k * k * near + far)


def test_tempered_moments_match_frozen_oracle():
    for (a, lam), (m2, tail) in TEMPERED_MOMENTS.items():
        mu = TemperedStable(a, lam)
        got_m2, got_tail = levy.second_moment_near(mu, 0.3), levy.tail_mass(mu, 0.3)
        print(a, lam, got_m2 - m2, got_tail - tail)
        assert got_m2 == pytest.approx(m2, rel=1e-10)
        assert got_tail == pytest.approx(tail, rel=1e-10)


def test_stable_moments_match_frozen_oracle():
    for a, (m2, tail) in STABLE_MOMENTS.items():
        mu = Stable(a)
        assert levy.second_moment_near(mu, 0.3) == pytest.approx(m2, rel=1e-12)
        assert levy.tail_mass(mu, 0.3) == pytest.approx(tail, rel=1e-12)


def test_supersolution_constant_against_live_mpmath():
    op = OperatorKind.levy(TemperedStable(1.0, 2.0), adjoint=True)
    c = levy.supersolution_constants(op, 1.0, 2.0, 0.5)
    live = _mp_ck(1.0, 2.0, 1.0)
    print("C_k", c.C_k, "mpmath", live, "frozen", C_K_HEADLINE)
    assert abs(c.C_k - live) / live < 1e-8
    assert abs(c.C_k - C_K_HEADLINE) / C_K_HEADLINE < 1e-8
    assert c.k == 1.0 and c.K == c.C_k
    assert c.C == pytest.approx(2.0 * math.exp(0.5))
    c2 = levy.supersolution_constants(OperatorKind.levy(TemperedStable(0.5, 1.5)), 1.0, 1.0, 0.5)
    assert abs(c2.C_k - C_K_HALF) / C_K_HALF < 1e-8


def test_stable_is_not_tempered():
    with pytest.raises(Divergent):
        levy.assert_tempered(Stable(1.0), 0.5)
    with pytest.raises(NotTempered):
        levy.supersolution_constants(OperatorKind.levy(Stable(1.0)), 1.0, 1.0, 0.5)
    # past the tempering rate diverges; at the rate the power tail still converges
    with pytest.raises(Divergent):
        levy.assert_tempered(TemperedStable(1.0, 2.0), 2.5)
    assert levy.assert_tempered(TemperedStable(1.0, 2.0), 2.0) == pytest.approx(2.0, rel=1e-10)
    assert levy.assert_tempered(TemperedStable(1.0, 2.0), 1.0) > 0.0


def test_fractional_laplacian_constant_closed_forms():
    # alpha = 1 gives 1/pi; the general formula against mpmath gamma
    assert levy.fractional_laplacian_constant(1.0) == pytest.approx(1.0 / math.pi, rel=1e-15)
    for a in (0.3, 0.5, 1.5, 1.9):
        ref = float(a * 2 ** (a - 1) * mp.gamma((1 + a) / 2) / (mp.sqrt(mp.pi) * mp.gamma(1 - a / 2)))
        assert levy.fractional_laplacian_constant(a) == pytest.approx(ref, rel=1e-13)


def test_drift_cancels_for_symmetric_measures():
    for mu in (Stable(1.2), TemperedStable(0.7, 1.0), Atomic(((0.5, 1.0), (-0.5, 1.0)))):
        assert levy.drift_correction(mu, 0.1) == 0.0
    skew = Atomic(((0.5, 2.0), (-0.4, 1.0)))
    assert levy.drift_correction(skew, 0.1) == pytest.approx(-(0.5 * 2.0 - 0.4 * 1.0))
    assert levy.drift_correction(skew, 1.0) == 0.0


def test_atomic_moments_exact():
    mu = Atomic(((0.2, 1.0), (-1.5, 0.5), (3.0, 0.25)))
    assert levy.second_moment_near(mu, 1.0) == pytest.approx(0.04)
    assert levy.tail_mass(mu, 1.0) == pytest.approx(0.75)
    assert levy.assert_tempered(mu, 1.0) == pytest.approx(0.5 * math.exp(1.5) + 0.25 * math.exp(3.0))
    assert not mu.is_symmetric
    assert mu.reflect().reflect() == mu


def test_tabulated_density_matches_trapezoid_and_tail():
    mu = TabulatedDensity((-2.0, -1.0, 0.5, 1.0, 2.0), (0.0, 1.0, 1.0, 2.0, 1.0), decay_rate=3.0)
    # positive half: 0.5..1 trapezoid 0.75, 1..2 trapezoid 1.5, tail 1/3
    assert levy.half_line_mass(mu, 0.0, math.inf) == pytest.approx(0.75 + 1.5 + 1.0 / 3.0, rel=1e-12)
    assert levy.tail_mass(mu, 0.5) == pytest.approx(0.75 + 1.5 + 1.0 / 3.0 + 0.5, rel=1e-12)
    with pytest.raises(Divergent):
        levy.assert_tempered(mu, 3.0)


def test_invalid_measures_rejected():
    with pytest.raises(ValueError):
        Stable(2.5)
    with pytest.raises(ValueError):
        TemperedStable(1.0, -1.0)
    with pytest.raises(ValueError):
        Atomic(((0.0, 1.0),))
    with pytest.raises(ValueError):
        TabulatedDensity((1.0, 0.5), (1.0, 1.0))


def test_measure_config_roundtrip():
    for mu in (Stable(0.8, 2.0), TemperedStable(1.0, 2.0, 0.5), Atomic(((1.0, 2.0), (-0.5, 1.0)))):
        assert levy.measure_from_config(levy.measure_to_config(mu)) == mu
    assert levy.measure_from_config({"kind": "stable", "alpha": 1.0}) == levy.fractional_laplacian(1.0)


def test_operator_kind_dual_reflects():
    mu = Atomic(((1.0, 2.0),))
    op = OperatorKind.levy(mu)
    assert op.dual().effective_measure() == mu.reflect()
    assert op.dual().dual() == op
    assert OperatorKind.laplacian().is_local


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 1.8), st.floats(0.5, 4.0), st.floats(0.05, 0.9))
def test_moment_split_is_additive(alpha, lam, r):
    # mass over (r, 1] plus mass beyond 1 equals the tail mass beyond r
    mu = TemperedStable(alpha, lam)
    inner = levy.half_line_mass(mu, r, 1.0) * 2.0
    assert inner + levy.tail_mass(mu, 1.0) == pytest.approx(levy.tail_mass(mu, r), rel=1e-10)
    assert levy.second_moment_near(mu, r) <= levy.second_moment_near(mu, 1.0)
