import json
import warnings

import numpy as np
import pytest

from schauder_lab import cli, lab
from schauder_lab.besov import TruncationWarning
from schauder_lab.catalog import make_problem
from schauder_lab.errors import ConfigError
from schauder_lab.lab import ExperimentConfig, GridConfig, run_experiment, schauder_constant_report

TINY_GRID = {"points": 9, "half_width": 3.0, "time_points": 3}


@pytest.mark.parametrize("raw,field", [
    ({"gamma": 1.5}, "gamma"),
    ({"gamma": 0}, "gamma"),
    ({"T": -1}, "T"),
    ({"problem": "nope"}, "problem"),
    ({"experiment": "plot"}, "experiment"),
    ({"colour": 1}, "colour"),
    ({"grid": {"points": 2}}, "grid.points"),
    ({"grid": {"spacing": 1}}, "grid.spacing"),
    ({"mc": {"paths": 1}}, "mc.paths"),
    ({"mc": {"antithetic": "yes"}}, "mc.antithetic"),
    ({"mollification": {"levels": [8, 0]}}, "mollification.levels[1]"),
    ({"mollification": {"quad_points": 4}}, "mollification.quad_points"),
    ({"lambda": [0.5], "T": 1.0}, "lambda[0]"),
    ({"points": [[0, 0, 0]]}, "points[0]"),
    ({"besov": {"theta": [2]}}, "besov.theta"),
    ({"besov": {"mode": "x"}}, "besov.mode"),
    ({"seed": 1.5}, "seed"),
    ({"seed": True}, "seed"),
    ({"params": {"g": "nope"}}, "params.g"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(raw)
    assert exc.value.field == field


def test_config_defaults_round_trip():
    cfg = ExperimentConfig.from_dict({"problem": "kinetic", "lambda": 0.5, "T": 0.25, "points": [[0, 1]]})
    assert cfg.lam == (0.5,) and cfg.points == ((0.0, 1.0),) and cfg.grid == GridConfig()


def test_load_reports_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.load(path)
    assert exc.value.field == "config"


def test_schauder_report_zero_data_gives_zero_ratio():
    p = make_problem("kolmogorov", {"g": "zero"})
    rep = schauder_constant_report(p, (8, 16), GridConfig(points=9, half_width=3.0, time_points=3), samples=4)
    assert [r["ratio"] for r in rep["rows"]] == [0.0, 0.0] and rep.passed


def test_schauder_report_linear_data_identical_across_levels():
    p = make_problem("kolmogorov", {"g": "x2"})
    rep = schauder_constant_report(p, (8, 16), GridConfig(points=9, half_width=3.0, time_points=3), samples=4)
    ratios = [r["ratio"] for r in rep["rows"]]
    assert ratios[0] > 0 and ratios[1] == pytest.approx(ratios[0], rel=1e-9)
    assert rep["relative_spread"] < 1e-9


def test_run_experiment_writes_report_and_tables(tmp_path):
    cfg = ExperimentConfig.from_dict({"experiment": "solve", "grid": TINY_GRID, "points": [[0, 0], [0.5, 0.5]]})
    summary, passed = run_experiment(cfg, tmp_path)
    assert passed
    doc = json.loads((tmp_path / "report.json").read_text())
    assert set(doc) == {"config", "metadata", "passed", "reports"}
    assert set(doc["metadata"]) == {"timestamp", "version"}
    lines = (tmp_path / "solve.csv").read_bytes().split(b"\n")
    assert lines[0] == b"x1,x2,u" and lines[-1] == b""
    assert (tmp_path / "field.bin").exists()


def test_strict_promotes_warnings(monkeypatch):
    def noisy(cfg, problem, bundle):
        warnings.warn("edge mass", TruncationWarning)

    monkeypatch.setattr(lab, "_check", noisy)
    cfg = ExperimentConfig.from_dict({"experiment": "check"})
    with pytest.warns(TruncationWarning):
        run_experiment(cfg)
    with pytest.raises(TruncationWarning):
        run_experiment(cfg, strict=True)


def _write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_fk_minimal(tmp_path, capsys):
    code = cli.main(["fk", "--config", _write(tmp_path, {"mc": {"paths": 500, "steps": 10}}), "--seed", "11"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    fk = doc["reports"][0]["payload"]
    assert {"estimate", "halfwidth", "paths", "steps", "seed"} <= set(fk)
    assert fk["seed"] == 11 and fk["paths"] == 500


def test_cli_invalid_gamma_exit_one(tmp_path, capsys):
    assert cli.main(["check", "--config", _write(tmp_path, {"gamma": 1.5})]) == 1
    assert "gamma" in capsys.readouterr().err


def test_cli_missing_config_exit_one(tmp_path):
    assert cli.main(["check", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_diagnostic_failure_exit_two(tmp_path, monkeypatch):
    def failing(cfg, problem, bundle):
        bundle.add(lab.DiagnosticReport("forced", {}, passed=False))

    monkeypatch.setattr(lab, "_check", failing)
    assert cli.main(["check", "--out", str(tmp_path / "o")]) == 2
    assert json.loads((tmp_path / "o" / "report.json").read_text())["passed"] is False


@pytest.mark.parametrize("seed", ["-1", "abc", str(2**64)])
def test_cli_rejects_bad_seed(seed):
    with pytest.raises(SystemExit):
        cli.main(["fk", "--seed", seed])


@pytest.mark.parametrize("cmd", ["check", "proxy", "scale"])
def test_cli_quick_pipelines_pass(tmp_path, cmd):
    doc = {"T": 0.25, "lambda": [1.0, 0.5, 0.25], "points": [[0.1, -0.2]]}
    assert cli.main([cmd, "--config", _write(tmp_path, doc), "--out", str(tmp_path / cmd)]) == 0
    assert (tmp_path / cmd / "report.json").exists()


def test_reports_are_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict({"experiment": "fk", "problem": "kinetic", "mc": {"paths": 300, "steps": 5}})
    a, _ = run_experiment(cfg, tmp_path / "a")
    b, _ = run_experiment(cfg, tmp_path / "b")
    assert lab.strip_metadata(a) == lab.strip_metadata(b)
    assert (tmp_path / "a" / "fk.csv").read_bytes() == (tmp_path / "b" / "fk.csv").read_bytes()


@pytest.mark.slow
def test_full_kinetic_pipeline(tmp_path):
    doc = {"problem": "kinetic", "grid": TINY_GRID, "mollification": {"levels": [8, 16]},
           "sensitivity": {"samples": 4}}
    code = cli.main(["full", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")])
    out = json.loads((tmp_path / "o" / "report.json").read_text())
    names = [r["name"] for r in out["reports"]]
    assert {"schauder_constant", "sensitivity_suite", "psi_besov_profile"} <= set(names)
    for table in ("schauder_constant", "sensitivity_suite", "psi_besov_profile"):
        assert (tmp_path / "o" / f"{table}.csv").exists()
    assert code in (0, 2) and (code == 0) == out["passed"]
