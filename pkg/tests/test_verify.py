import numpy as np
import pytest

from l1contract import config as cf
from l1contract import dual as dl
from l1contract import harness
from l1contract import verify as V
from l1contract.errors import NotTempered
from l1contract.levy import OperatorKind, Stable
from l1contract.scheme import FluxSpec, InitialData, PhiSpec, ProblemSpec, ScenarioPair


def _report(lhs, rhs, tol, n=100):
    return V.ContractionReport("thm2.7", lhs, rhs, tol, n, 0.1, 0.01, details={"extra": 1.5})


def test_report_semantics_and_tables():
    ok, bad = _report(1.0, 1.5, 0.0), _report(2.0, 1.0, 0.5)
    assert ok.margin == 0.5 and ok.violation == 0.0 and ok.passed
    assert bad.margin == -1.0 and bad.violation == -1.0 and not bad.passed
    assert _report(1.0, 0.9, 0.1).passed  # margin exactly -tol
    rec = bad.record()
    assert rec["pass"] is False and rec["extra"] == 1.5
    assert "FAIL" in bad.line() and "PASS" in ok.line()
    rows = V.reports_csv([ok, bad]).splitlines()
    assert rows[0].split(",") == V.CSV_FIELDS and len(rows) == 3
    assert V.reports_text([ok, bad]).count("inequality_id = thm2.7") == 2


def test_sweep_ratios():
    reps = [_report(1.0, 0.6, 1.0, 100), _report(1.0, 0.8, 1.0, 200), _report(1.0, 1.0, 1.0, 400),
            _report(1.0, 0.9, 1.0, 800)]
    rows = V.sweep_table(reps)
    assert [r.n for r in rows] == [100, 200, 400, 800]
    assert rows[0].ratio is None and rows[1].ratio == pytest.approx(2.0)
    assert rows[2].ratio is None and rows[3].ratio == pytest.approx(0.0)
    csv = V.sweep_csv(rows).splitlines()
    assert csv[0] == "n,margin,tolerance,violation,ratio" and csv[1].endswith(",")


def test_kato_violation_floor():
    mk = lambda v: V.ContractionReport("kato", 0.0, v, 1.0, 10, 0.1, 0.01)
    assert V.kato_violation(mk(0.3)) == 0.0
    assert V.kato_violation(mk(-1e-13)) == 0.0
    assert V.kato_violation(mk(-2e-3)) == 2e-3
    assert V.kato_violation(mk(-2e-3), floor=1e-2) == 0.0


def test_random_test_functions_stay_inside():
    rng = np.random.default_rng(7)
    for psi in V.random_test_functions(rng, 50, (-3.0, 3.0), 0.5):
        assert -3.0 < psi.x_center - psi.x_radius and psi.x_center + psi.x_radius < 3.0
        assert 0.0 < psi.t_center - psi.t_radius and psi.t_center + psi.t_radius < 0.5


def test_identical_data_give_zero_lhs():
    cfg = cf.from_preset("finite-speed-burgers")
    pu = cfg.pair.problem_u
    rep = V.verify_finite_speed(ScenarioPair(pu, pu), 0.0, 1.0, 0.5, n=400)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed


def test_finite_speed_preset_passes():
    cfg = cf.from_preset("finite-speed-burgers")
    rep = V.verify_finite_speed(cfg.pair, 0.0, 1.0, cfg.T, n=500)
    print(rep.line(), rep.details)
    assert rep.passed and rep.lhs > 0.0
    assert rep.details["rhs_source"] == 0.0


def test_finite_speed_needs_zero_phi():
    cfg = cf.from_preset("linear-duhamel-heat")
    with pytest.raises(ValueError):
        V.verify_finite_speed(cfg.pair, 0.0, 1.0, cfg.T, n=200)


def test_linear_duhamel_heat_passes():
    cfg = cf.from_preset("linear-duhamel-heat")
    rep = V.verify_duhamel_linear(cfg.pair, 2.0, 0.0, 1.0, cfg.T, n=800)
    print(rep.line())
    assert rep.passed
    with pytest.raises(ValueError):
        V.verify_duhamel_linear(cfg.pair, 1.0, 0.0, 1.0, cfg.T, n=200)


def test_nonlinear_bound_needs_tempered_measure():
    p = ProblemSpec(FluxSpec.burgers(), PhiSpec.identity(), OperatorKind.levy(Stable(1.0)),
                    InitialData.bump_over_constant(0.2, 0.5), 0.3, (-5.0, 5.0))
    pair = ScenarioPair(p, p)
    h = 0.05
    d = dl.solve_dual(dl.BumpSpec.unit_mass(h), OperatorKind.laplacian().dual(), dl.dual_grid_for(h, 3.0), 0.3, 11)
    with pytest.raises(NotTempered):
        V.verify_duhamel_nonlinear(pair, d, 0.0, 1.0, 0.3, n=200)
    with pytest.raises(NotTempered):
        V.verify_duhamel_nonlinear(pair, d, 0.0, 1.0, 0.3, n=200, exp_rate=1.0)


def test_comparison_needs_ordered_data():
    cfg = cf.from_preset("stefan-tempered-headline")
    with pytest.raises(ValueError):
        V.verify_corollary(cfg.pair, "c", n=200)
    ordered = harness.ordered_pair(cfg.pair)
    rep = V.verify_corollary(ordered, "c", n=200)
    print(rep.line())
    assert rep.passed and rep.lhs == 0.0


def test_maximum_principle_both_orders():
    cfg = cf.from_preset("stefan-tempered-headline")
    for pair in (cfg.pair, cfg.pair.swapped()):
        rep = V.verify_corollary(pair, "d", n=200)
        assert rep.passed


def test_headline_nonlinear_bound_small_grid():
    cfg = cf.from_preset("stefan-tempered-headline").with_n(400)
    ctx = harness._Context(cfg)
    reps = harness.run_check("thm2.9", ctx)
    for r in reps:
        print(r.line())
        assert r.passed
