import json
import logging

import pytest

from autonomy_lab.cli import EXIT_FAILED, EXIT_INPUT, EXIT_NO_SOLUTION, EXIT_OK, EXIT_OUTPUT, run
from autonomy_lab.reporting import read_csv

META_KEYS = {"artifact_version", "preset", "seed", "dt", "n_paths", "terminal_convention",
             "generator"}


def test_analyze_threshold(tmp_path, capsys):
    assert run(["analyze", "--preset", "paper-2025", "--what", "critical-threshold",
                "--out", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "1.531"
    doc = json.loads((tmp_path / "analysis.json").read_text())
    assert META_KEYS <= set(doc["meta"])
    assert (tmp_path / "manifest_analyze.json").exists()


def test_analyze_all_csv_format(tmp_path):
    assert run(["analyze", "--format", "csv", "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "analysis.csv").read_text()
    assert "analysis.critical_threshold,1.5311288741492748" in text
    assert "analysis.hitting_times.12.expected_time" in text


def test_config_file_and_overrides(tmp_path, caplog):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mu0 = 0.12\nmaster_seed = 5\nn_a = 60\n")
    with caplog.at_level(logging.INFO, logger="autonomy_lab"):
        assert run(["analyze", "--what", "drift", "--config", str(cfg), "--seed", "9",
                    "--out", str(tmp_path)]) == EXIT_OK
    assert "overrides" in caplog.text
    man = json.loads((tmp_path / "manifest_analyze.json").read_text())
    assert man["config"]["params"]["mu0"] == 0.12
    assert man["config"]["sim"]["master_seed"] == 9
    assert man["config"]["grid"] == {"n_a": 60}
    assert "n_jobs" not in man["config"]["sim"]


@pytest.mark.parametrize("body", ["bogus = 1\n", "mu0 = fast\n", "rho = 0.5\n", "= = =\n[x\n"])
def test_bad_config_is_input_error(tmp_path, body):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body)
    assert run(["analyze", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_INPUT


def test_bad_flags_are_input_errors(tmp_path):
    assert run(["analyze", "--preset", "nope", "--out", str(tmp_path)]) == EXIT_INPUT
    assert run(["frobnicate"]) == EXIT_INPUT
    assert run(["simulate", "--policy", "sometimes", "--out", str(tmp_path)]) == EXIT_INPUT


def test_missing_solution(tmp_path):
    assert run(["compare", "--out", str(tmp_path)]) == EXIT_NO_SOLUTION
    assert run(["compare", "--solution", str(tmp_path / "x.npz"), "--out", str(tmp_path)]) \
        == EXIT_NO_SOLUTION
    assert run(["simulate", "--policy", "optimal", "--out", str(tmp_path)]) == EXIT_NO_SOLUTION


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(["analyze", "--out", str(blocker / "sub")]) == EXIT_OUTPUT


def test_simulate_constant_information(tmp_path):
    assert run(["simulate", "--policy", "constant:4", "--paths", "5000", "--dump-paths", "1",
                "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "simulation.json").read_text())["summary"]
    assert summary["mean_absorption_time"] == pytest.approx(2.49, abs=0.05)
    meta, cols, data = read_csv(tmp_path / "ensemble.csv")
    assert cols == ["t", "mean_A", "var_A", "mean_I", "absorbed_fraction"]
    assert META_KEYS <= set(meta) and meta["n_paths"] == 5000
    _, cols, path = read_csv(tmp_path / "path_0000.csv")
    assert cols == ["t", "A", "I", "u", "absorbed"]
    assert set(path[:, 4]) <= {0.0, 1.0}


def test_solve_compare_report(tmp_path, capsys):
    out = str(tmp_path)
    assert run(["solve", "--n-a", "60", "--n-i", "50", "--out", out]) == EXIT_OK
    assert (tmp_path / "solution.npz").exists()
    _, cols, ctrl = read_csv(tmp_path / "control_mid.csv")
    assert cols == ["t", "a", "i", "u"] and ctrl.shape[0] == 60 * 50
    # a solution solved with other parameters is rejected
    cfg = tmp_path / "other.cfg"
    cfg.write_text("kappa = 1.0\n")
    assert run(["compare", "--config", str(cfg), "--solution", str(tmp_path / "solution.npz"),
                "--out", out]) == EXIT_INPUT
    code = run(["compare", "--paths", "300", "--solution", str(tmp_path / "solution.npz"),
                "--out", out])
    assert code in (EXIT_OK, EXIT_FAILED)
    for arm in ("optimal", "max_transparency", "no_transparency"):
        assert (tmp_path / f"trajectory_{arm}.csv").exists()
    capsys.readouterr()
    assert run(["report", "--out", out]) == EXIT_OK
    text = (tmp_path / "report.md").read_text()
    assert "## solve" in text and "## compare" in text and "Policy comparison" in text


def test_report_needs_prior_outputs(tmp_path):
    assert run(["report", "--out", str(tmp_path)]) == EXIT_INPUT


def test_csv_numbers_use_full_precision(tmp_path):
    run(["simulate", "--policy", "max", "--paths", "3", "--out", str(tmp_path)])
    line = (tmp_path / "ensemble.csv").read_text().splitlines()[-2]
    assert any(len(x.replace(".", "").lstrip("0")) >= 15 for x in line.split(","))
