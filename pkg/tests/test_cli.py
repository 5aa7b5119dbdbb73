import json
import os

import numpy as np
import pytest

import compensctrl.checks as checks
from compensctrl.cli import main
from compensctrl.human import resolve_human_velocity
from compensctrl.scenario import data_path, load_scenario, run_trial


def _summary(capsys):
    return capsys.readouterr().out.strip().splitlines()


def _final_errors(line):
    parts = dict(p.split("=") for p in line.split() if "=" in p)
    return float(parts["|e_e|"]), float(parts["|e_c|"])


def test_run_sim1_converges(tmp_path, capsys):
    assert main(["run", "sim1", "--out", str(tmp_path)]) == 0
    (line,) = _summary(capsys)
    ee, ec = _final_errors(line)
    assert ee < 5e-3 and ec < 5e-3
    assert "steps=" in line and "wall=" in line
    assert (tmp_path / "sim1.csv").exists() and (tmp_path / "sim1.json").exists()


def test_run_controller_off_leaves_compensation(tmp_path, capsys):
    assert main(["run", str(data_path("scenarios", "sim1.json")), "--controller=off",
                 "--out", str(tmp_path)]) == 0
    ee, ec = _final_errors(_summary(capsys)[0])
    assert ec > 0.1 and ee < ec


def test_cli_trace_equals_api_trace(tmp_path):
    assert main(["run", "sim2", "--horizon", "1.5", "--w", "0.6", "--out", str(tmp_path / "cli")]) == 0
    tr = run_trial(load_scenario("sim2").with_overrides(horizon=1.5, w=0.6))
    api = tr.write(tmp_path / "api")
    assert (tmp_path / "cli" / "sim2.csv").read_bytes() == api[0].read_bytes()
    assert (tmp_path / "cli" / "sim2.json").read_bytes() == api[1].read_bytes()


def test_parallel_run_matches_serial(tmp_path):
    args = ["run", "sim1", "fig2", "--horizon", "0.5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("sim1.csv", "fig2.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_scenario_exit_2(tmp_path, capsys):
    p = tmp_path / "empty.json"
    p.write_text("{}")
    assert main(["run", str(p)]) == 2
    assert "non-empty" in capsys.readouterr().err


def test_invalid_json_exit_2(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{ not json")
    assert main(["run", str(p)]) == 2


def test_bad_override_rejected_before_running(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "sim1", "--w", "1.5", "--out", str(out)]) == 2
    assert not out.exists()


@pytest.mark.parametrize("argv", [["run"], ["run", "sim1", "--controller", "maybe"],
                                  ["sweep", "fig13", "--grid", "3by3"], ["launch"]])
def test_argument_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_missing_file_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == 4


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "fig2", "--horizon", "0.1", "--out", str(blocker)]) == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_simulation_failure_exit_3(tmp_path, capsys):
    d = json.loads(data_path("scenarios", "sim1.json").read_text())
    d["human"]["lambda_e"] = 1e6
    d["controller"] = False
    d["chain"] = str(data_path("chains", "prosthesis7.json"))
    p = tmp_path / "wild.json"
    p.write_text(json.dumps(d))
    assert main(["run", str(p), "--horizon", "2", "--out", str(tmp_path)]) == 3
    assert "FAILED" in capsys.readouterr().err


def test_sweep_grid_rows_and_determinism(tmp_path, capsys):
    for sub in ("a", "b"):
        assert main(["sweep", "fig13", "--grid", "3x3", "--seed", "3", "--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "a" / "fig13_sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "fig13_sweep.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "ratio_e,ratio_c,stable" and len(lines) == 10
    assert "9/9 agree" in capsys.readouterr().out


def test_default_sweep_unit_cell_stable(tmp_path):
    assert main(["sweep", "fig13", "--jobs", "4", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "fig13_sweep.csv").read_text().splitlines()[1:]
    assert len(rows) == 81
    cells = {(float(a), float(b)): int(s) for a, b, s in (r.split(",") for r in rows)}
    assert cells[(1.0, 1.0)] == 1


def test_check_pristine(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_check_flags_non_unit_axis(tmp_path, capsys):
    d = json.loads(data_path("chains", "prosthesis7.json").read_text())
    d["joints"][3]["axis"] = [0, 0, 1.01]
    p = tmp_path / "bent.json"
    p.write_text(json.dumps(d))
    assert main(["check", "--chain", str(p)]) == 1
    out = capsys.readouterr().out
    assert "FAIL joint-axis-unit-norm" in out and "scapula_elevation" in out


def test_check_catches_perturbed_least_squares(monkeypatch, capsys):
    def perturbed(model, bundle, e_e, e_c):
        return resolve_human_velocity(model, bundle, e_e, e_c) * (1 + 1e-6)

    assert not checks.check_ls_oracle(velocity_fn=perturbed).passed
    monkeypatch.setattr(checks, "resolve_human_velocity", perturbed)
    assert main(["check"]) == 1
    out = capsys.readouterr().out
    assert "FAIL least-squares-oracle" in out
    assert "PASS jacobian-finite-difference" in out


def test_log_level_from_environment(monkeypatch, tmp_path, capsys):
    import logging
    monkeypatch.setenv("COMPENSCTRL_LOG", "debug")
    root = logging.getLogger()
    old = root.level
    try:
        root.handlers.clear()
        main(["check"])
        assert logging.getLogger().level == logging.DEBUG
    finally:
        root.setLevel(old)
