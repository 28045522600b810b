import json

import pytest

from dtnlab.cli import main
from dtnlab.config import ConfigError, ExperimentConfig, parse_config


def write(path, doc):
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return path


def test_run_solve_writes_outputs(tmp_path):
    cfg = write(tmp_path / "solve.json", {
        "experiment": "solve",
        "mesh": {"region": "UnitSquare", "resolution": 12},
        "a": {"kind": "clamped-linear", "rise": 0.5},
        "c": {"kind": "constant", "value": 0.3},
        "params": {"g": {"kind": "fourier", "amplitude": 0.5, "mode": 1}},
    })
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    summaries = list(out.glob("solve-*-summary.json"))
    assert len(summaries) == 1
    summary = json.loads(summaries[0].read_text())
    assert summary["passed"] is True
    assert list(out.glob("solve-*.csv"))


@pytest.mark.parametrize("experiment,params", [
    ("dtn", {}),
    ("linearize", {}),
    ("identity-check", {}),
    ("cap-check", {}),
])
def test_run_other_experiments(tmp_path, experiment, params):
    cfg = write(tmp_path / "cfg.json", {
        "experiment": experiment,
        "mesh": {"region": "UnitSquare", "resolution": 10},
        "a": {"kind": "clamped-linear"},
        "params": params,
    })
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = write(tmp_path / "bad.json", '{\n  "experiment": "solve",\n  "mesh": {"resolution": 8,}\n}\n')
    assert main(["run", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "bad.json:3:" in err


def test_unknown_field_is_usage_error(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {"experiment": "solve", "mesh": {"resolution": 8, "colour": 1}})
    assert main(["run", "--config", str(cfg)]) == 2
    assert "mesh.colour" in capsys.readouterr().err


def test_bad_params_is_usage_error(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {"experiment": "solve", "params": {"tol": -1}})
    assert main(["run", "--config", str(cfg)]) == 2
    assert "params.tol" in capsys.readouterr().err


def test_missing_arguments_and_file(tmp_path):
    assert main(["run"]) == 2
    assert main([]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "fail.json", {
        "experiment": "solve",
        "mesh": {"region": "UnitSquare", "resolution": 8},
        "a": {"kind": "table", "u_grid": [0.0, 0.05], "a_values": [0.25, 4.0], "alpha": 0.25},
        "params": {"g": {"amplitude": 1.0}, "path": "picard", "max_iter": 2},
    })
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "max_iter" in capsys.readouterr().err


def test_verify_all_assertion_failure(tmp_path):
    suite = write(tmp_path / "suite.json", {"checks": ["conormal-identity", "cap-integrals"], "tolerances": {"cap": 0.0}})
    out = tmp_path / "v"
    assert main(["verify-all", "--suite", str(suite), "--out", str(out)]) == 1
    report = json.loads((out / "verify-all-report.json").read_text())
    status = {r["name"]: r["passed"] for r in report["checks"]}
    assert status == {"conormal-identity": True, "cap-integrals": False}


def test_verify_all_unknown_check(tmp_path):
    suite = write(tmp_path / "suite.json", {"checks": ["nope"]})
    assert main(["verify-all", "--suite", str(suite), "--out", str(tmp_path / "v")]) == 2


def test_parse_config_defaults():
    cfg = parse_config('{"experiment": "probe-a0"}', ExperimentConfig)
    assert cfg.mesh.resolution > 0
    with pytest.raises(ConfigError):
        parse_config('{"experiment": "teleport"}', ExperimentConfig)
