import csv
import io
import json
import subprocess
import sys

import pytest

from lfeconnect import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_writes_result_and_trajectory(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--scenario", "minkowski_uniform", "--out", str(tmp_path))
    assert code == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    assert rec["converged"] is True and rec["residual"] < 1e-8
    assert rec["trajectory_ref"] == "trajectory.csv"
    assert (tmp_path / "trajectory.csv").read_text().count("\n") > 10
    assert json.loads(out) == rec


def test_solve_is_deterministic(capsys, tmp_path):
    for sub in ("a", "b"):
        assert run(capsys, "solve", "--scenario", "ribbon", "--grid", "4", "--seed", "2", "--out", str(tmp_path / sub))[0] == 0
    for name in ("result.json", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solve_kk_method(capsys):
    code, out, _ = run(capsys, "solve", "--scenario", "minkowski_uniform", "--method", "kk")
    rec = json.loads(out)
    assert code == 0 and rec["method"] == "kk" and rec["nu"] > 0


def test_unreachable_target_exits_with_code_2(capsys, tmp_path):
    code, out, err = run(capsys, "solve", "--scenario", "sphere", "--target", "antipodal", "--out", str(tmp_path))
    assert code == 2
    assert "no convergence" in err
    assert json.loads(out)["converged"] is False
    assert not (tmp_path / "trajectory.csv").exists()


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "minkowski_uniform", "ratio": 2.0, "endpoint_tol": 1e-9}))
    code, out, _ = run(capsys, "solve", "--config", str(cfg))
    rec = json.loads(out)
    assert rec["problem"]["ratio"] == 2.0 and rec["problem"]["endpoint_tol"] == 1e-9
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--ratio", "1")
    rec = json.loads(out)
    assert code == 0 and rec["problem"]["ratio"] == 1.0 and rec["problem"]["endpoint_tol"] == 1e-9


def test_scenario_file_overrides_events(capsys, tmp_path):
    spec = tmp_path / "scenario.json"
    spec.write_text(json.dumps({"name": "minkowski_uniform", "parameters": {"B": 1.0},
                                "x1": {"coords": [3.0, 0.4, 0.1], "chart": "cartesian"}}))
    code, out, _ = run(capsys, "solve", "--scenario-file", str(spec))
    rec = json.loads(out)
    assert code == 0 and rec["problem"]["x1"]["coords"] == [3.0, 0.4, 0.1]


@pytest.mark.parametrize(
    "argv",
    [
        ["solve"],
        ["solve", "--scenario", "torus"],
        ["solve", "--scenario", "ribbon", "--tol", "-1"],
        ["solve", "--scenario", "ribbon", "--grid", "0"],
        ["solve", "--scenario", "ribbon", "--param", "r"],
        ["solve", "--scenario", "ribbon", "--param", "color=1"],
        ["solve", "--scenario", "ribbon", "--target", "nowhere"],
        ["solve", "--scenario", "ribbon", "--target", "1,2"],
        ["solve", "--scenario", "sphere", "--method", "kk"],
        ["solve", "--scenario", "ribbon", "--method", "bfgs"],
        ["verify", "torus"],
        ["sweep", "--scenario", "ribbon"],
        ["sweep", "--scenario", "ribbon", "--ratios", "1:2:0"],
        ["sweep", "--scenario", "ribbon", "--ratios", "1,2", "--alphas", "10"],
        ["sweep", "--scenario", "ribbon", "--alphas", "10"],
        ["sweep", "--scenario", "ribbon", "--ratios", "1:2"],
        ["frobnicate"],
    ],
)
def test_configuration_errors_exit_with_code_1(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_bad_config_files(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "solve", "--config", str(bad))[0] == 1
    bad.write_text(json.dumps({"scenario": "ribbon", "colour": 3}))
    assert run(capsys, "solve", "--config", str(bad))[0] == 1
    assert run(capsys, "solve", "--config", str(tmp_path / "missing.json"))[0] == 1


def test_sweep_alphas_table(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--scenario", "cap_cylinder", "--alphas", "0,30,90", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    assert [float(r["alpha_deg"]) for r in rows] == [0.0, 30.0, 90.0]
    for r in rows:
        assert float(r["action"]) == pytest.approx(float(r["reference"]), rel=1e-6)
    assert (tmp_path / "sweep.csv").read_text() == out


def test_sweep_ratios_and_directions(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", "minkowski_uniform", "--ratios", "0.5:1:2")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["converged"] for r in rows] == ["true", "true"]
    code, out, _ = run(capsys, "sweep", "--scenario", "minkowski_uniform", "--directions", "3")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3


def test_verify_report_shape(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "cap_cylinder", "--out", str(tmp_path))
    report = json.loads(out)
    assert code == 0 and report["passed"] is True
    assert {"scenario", "seed", "checks", "timestamp"} <= set(report)
    assert all({"name", "measured", "expected", "tolerance", "passed"} <= set(c) for c in report["checks"])
    assert (tmp_path / "verify_cap_cylinder.json").exists()


def test_module_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "lfeconnect", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "solve" in proc.stdout and "sweep" in proc.stdout
