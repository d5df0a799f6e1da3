import json
import subprocess
import sys

import numpy as np
import pytest

from hyoc.cli import main_entry


def run_cli(monkeypatch, capsys, *args):
    monkeypatch.setattr(sys, "argv", ["hyoc", *args])
    code = 0
    try:
        main_entry()
    except SystemExit as exc:
        code = exc.code or 0
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def system_file(tmp_path, hinge_system):
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(hinge_system.to_dict()))
    return path


@pytest.fixture
def lc_model_file(tmp_path, hinge_lc_model):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"kind": "lc", **hinge_lc_model.to_dict()}))
    return path


def test_transform_then_solve(monkeypatch, capsys, tmp_path, system_file):
    model_path = tmp_path / "model.json"
    code, _, _ = run_cli(monkeypatch, capsys, "transform", "--in", str(system_file),
                         "--form", "compact", "--eta", "1.0", "--zeta", "0.5",
                         "--out", str(model_path))
    assert code == 0
    model = json.loads(model_path.read_text())
    assert model["kind"] == "lc"

    report_path = tmp_path / "report.json"
    code, _, _ = run_cli(monkeypatch, capsys, "solve", "--model", str(model_path),
                         "--x0", "0", "--N", "1", "--method", "local",
                         "--out", str(report_path))
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["status"] == "s_stationary"


def test_solve_oracle_from_system_model(monkeypatch, capsys, tmp_path, system_file):
    tagged = tmp_path / "tagged.json"
    data = json.loads(system_file.read_text())
    data["kind"] = "pwa_dc"
    tagged.write_text(json.dumps(data))
    code, out, _ = run_cli(monkeypatch, capsys, "solve", "--model", str(tagged),
                           "--x0", "0", "--N", "1", "--method", "oracle")
    assert code == 0
    report = json.loads(out)
    assert report["status"] == "global_optimal"


def test_simulate_inline_inputs(monkeypatch, capsys, lc_model_file):
    code, out, _ = run_cli(monkeypatch, capsys, "simulate", "--model",
                           str(lc_model_file), "--x0", "0", "--inputs", "-1;0.5")
    assert code == 0
    body = json.loads(out)
    assert body["states"][1][0] == pytest.approx(-1.0, abs=1e-8)
    assert len(body["states"]) == 3


def test_check_exit_codes(monkeypatch, capsys, tmp_path, lc_model_file):
    traj = tmp_path / "traj.json"
    traj.write_text(json.dumps({"x0": [0.0], "u": [[-1.0]],
                                "x": [[-1.0]], "w": [[0.0, 1.0]]}))
    # The far-edge configuration is M- but not S-stationary.
    code, out, _ = run_cli(monkeypatch, capsys, "check", "--model",
                           str(lc_model_file), "--traj", str(traj), "--level", "m")
    assert code == 0
    code, _, err = run_cli(monkeypatch, capsys, "check", "--model",
                           str(lc_model_file), "--traj", str(traj), "--level", "s")
    assert code == 2


def test_missing_file_is_io_error(monkeypatch, capsys):
    code, _, err = run_cli(monkeypatch, capsys, "solve", "--model", "missing.json",
                           "--x0", "0", "--N", "1")
    assert code == 3
    code, _, _ = run_cli(monkeypatch, capsys, "nonsense-command")
    assert code == 3


def test_bench_profile_gaps_pipeline(monkeypatch, capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_systems": 1, "dims": [[1, 1]],
                               "pieces_range": [2, 2], "horizons": [2],
                               "n_initial_states": 2, "seed": 5}))
    records = tmp_path / "records.csv"
    code, out, _ = run_cli(monkeypatch, capsys, "bench", "--config", str(cfg),
                           "--out", str(records))
    assert code == 0
    assert "6 records" in out
    lines = records.read_text().splitlines()
    assert lines[0].startswith("system,N,x0,method,status")
    assert len(lines) == 7

    profile_csv = tmp_path / "profile.csv"
    code, _, _ = run_cli(monkeypatch, capsys, "profile", "--records", str(records),
                         "--out", str(profile_csv))
    assert code == 0
    header = profile_csv.read_text().splitlines()[0]
    assert header.split(",")[0] == "tau"

    code, out, _ = run_cli(monkeypatch, capsys, "gaps", "--records", str(records))
    assert code == 0
    summaries = json.loads(out)
    assert "local_sparse" in summaries


def test_installed_script_smoke():
    proc = subprocess.run(["hyoc", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("transform", "simulate", "solve", "check", "bench", "profile",
                "gaps", "serve"):
        assert cmd in proc.stdout
