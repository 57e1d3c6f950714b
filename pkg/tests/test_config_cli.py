import json

import pytest
from click.testing import CliRunner

from l1contract import config as cf
from l1contract import harness
from l1contract.cli import main
from l1contract.errors import ParseError, ValidationError

MINIMAL = """
preset = "burgers-fractional"
[grid]
n = 400
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _issues(text):
    with pytest.raises(ValidationError) as exc:
        cf.parse_text(text)
    for i in exc.value.issues:
        print(i)
    return exc.value.issues


def test_minimal_config_gets_defaults_echoed(tmp_path):
    cfg = cf.parse_config(_write(tmp_path, MINIMAL))
    assert cfg.name == "burgers-fractional" and cfg.n == 400
    assert cfg.checks == ("thm2.8", "cor3.1d", "lem4.1")
    echo = cfg.echo
    assert echo["grid"] == {"x_min": -5.0, "x_max": 5.0, "n": 400}
    assert echo["problem"]["operator"] == {"kind": "stable", "alpha": 1.5}
    assert echo["dual"]["snapshots"] == 101 and echo["kato"]["count"] == 20
    # the echo rebuilds the same configuration
    assert cf.build_config(echo).echo == echo


def test_every_preset_builds():
    for name in cf.PRESETS:
        cfg = cf.from_preset(name)
        assert cfg.name == name and cfg.checks


def test_alpha_out_of_range():
    issues = _issues('preset = "burgers-fractional"\n[problem.operator]\nkind = "stable"\nalpha = 2.5\n')
    assert any(i.field == "problem.operator.alpha" and i.message == "alpha out of (0,2]" and i.line == 4
               for i in issues)


def test_stable_measure_rejected_for_nonlinear_bound():
    text = 'checks = ["thm2.9"]\nproblem.exp_rate = 1.0\n[problem.operator]\nkind = "stable"\nalpha = 1.0\n'
    issues = _issues(text)
    assert any("tempered" in i.message and "diverges" in i.message for i in issues)
    issues = _issues('checks = ["thm2.9"]\n[problem.operator]\nkind = "tempered"\nalpha = 1.0\nlambda = 2.0\n')
    assert any(i.field == "problem.exp_rate" for i in issues)


def test_issues_are_aggregated():
    text = "seed = -1\nthreads = 0\ntimes = [0.7]\nsweep = [2000, 1000]\n[grid]\nn = 5\n"
    fields = {i.field for i in _issues(text)}
    assert {"seed", "threads", "times", "sweep", "grid.n"} <= fields


def test_unknown_field_and_type_errors():
    issues = _issues('colour = "red"\n[grid]\nn = "many"\n')
    got = {(i.field, i.message, i.line) for i in issues}
    assert ("colour", "unknown field", 1) in got
    assert ("grid.n", "expected an integer", 3) in got


def test_parse_error_carries_line():
    with pytest.raises(ParseError) as exc:
        cf.parse_text('seed = 1\n[grid]\nn = = 3\n')
    assert exc.value.line == 3


def test_cutoff_radius_and_ball_outside_domain():
    text = 'preset = "stefan-tempered-headline"\nchecks = ["cor4.3"]\n[dual]\nR = 1.2\n'
    issues = _issues(text)
    assert any(i.field == "dual.R" and i.line == 4 for i in issues)
    issues = _issues('preset = "finite-speed-burgers"\n[[balls]]\nx0 = 4.0\nradius = 1.0\n')
    assert any(i.field.startswith("balls.0") and "exceeds the domain" in i.message for i in issues)


def test_model_mismatches():
    fields = [i.message for i in _issues('checks = ["thm2.7"]\n')]
    assert any("thm2.7" in m for m in fields)
    fields = [i.message for i in _issues('checks = ["lem4.1"]\n')]
    assert any("non-local" in m for m in fields)


def test_cli_pass_writes_atomic_manifest(tmp_path):
    out = tmp_path / "k"
    r = CliRunner().invoke(main, ["kernel", "--preset", "linear-duhamel-heat", "--out", str(out)])
    print(r.output)
    assert r.exit_code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "pass" and man["exit_code"] == 0
    assert not (out / "manifest.json.tmp").exists()
    assert "kernel_oracle.csv" in man["files"] and not (out / "failure.json").exists()


def test_cli_verification_failure_exit_1(tmp_path):
    cfg = _write(tmp_path, 'preset = "linear-duhamel-cauchy"\n[grid]\nn = 10\n')
    r = CliRunner().invoke(main, ["kernel", "--config", str(cfg), "--out", str(tmp_path / "o")])
    print(r.output)
    assert r.exit_code == 1
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["status"] == "fail"


def test_cli_config_error_exit_2(tmp_path):
    cfg = _write(tmp_path, 'checks = ["thm2.9"]\n[problem.operator]\nkind = "stable"\nalpha = 1.0\n')
    r = CliRunner().invoke(main, ["verify", "--config", str(cfg)])
    assert r.exit_code == 2
    record = json.loads(r.stderr.strip().splitlines()[-1]) if r.stderr else json.loads(r.output.splitlines()[-1])
    assert record["exit_code"] == 2 and record["issues"]
    assert CliRunner().invoke(main, ["verify"]).exit_code == 2


def test_cli_numerical_failure_exit_3(tmp_path):
    cfg = _write(tmp_path, 'preset = "burgers-fractional"\nproblem.T = 5.0\ntimes = [5.0]\n'
                           '[kernel]\nalpha = 0.1\nt = 5.0\n[grid]\nx_min = -20.0\nx_max = 20.0\nn = 64\n')
    out = tmp_path / "o"
    r = CliRunner().invoke(main, ["kernel", "--config", str(cfg), "--out", str(out)])
    print(r.output)
    assert r.exit_code == 3
    fail = json.loads((out / "failure.json").read_text())
    assert fail["exit_code"] == 3 and fail["type"] == "DomainTooSmall"
    assert json.loads((out / "manifest.json").read_text())["status"] == "error"


def test_execute_small_grid_passes(tmp_path):
    cfg = cf.from_preset("finite-speed-burgers").with_n(100)
    res = harness.execute(cfg, "verify", out=tmp_path / "o", n_list=None)
    assert res.exit_code == 0
