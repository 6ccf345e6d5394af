import json
import subprocess
import sys
from pathlib import Path

import pytest

from lyasco.cli import main

DATA = Path(__file__).parent.parent / "src" / "lyasco" / "data"


def run_cli(args, **kw):
    return subprocess.run([sys.executable, "-m", "lyasco.cli", *args],
                          capture_output=True, text=True, **kw)


@pytest.fixture()
def toy_lure_file(tmp_path):
    doc = {
        "kind": "lure",
        "name": "toy",
        "system": {
            "a_matrix": [[-1.0, 0.0], [0.0, -1.0]],
            "b_matrix": [[1.0, 0.0], [0.0, 1.0]],
            "c_matrix": [[1.0, 0.0], [0.0, 1.0]],
            "equilibrium": [0.0, 0.0],
            "nonlinearities": [{"type": "linear", "gain": 0.2},
                               {"type": "linear", "gain": 0.2}],
        },
        "polytope": {"rows": [[1.0, 0.0], [0.0, 1.0]],
                     "lower": [-1.0, -1.0], "upper": [1.0, 1.0]},
        "scenario": {"t0": 0.0, "tc": 0.4,
                     "disturbance": {"type": "additive_pulse",
                                     "gains": [1.0, 0.0], "amplitude": 0.5}},
        "sco": {"cost_target": [0.9, 0.0]},
    }
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(doc))
    return path


def test_malformed_json_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["certify", str(bad)]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_unknown_field_rejected_with_pointer(tmp_path, capsys):
    doc = json.loads((DATA / "pendulum.json").read_text())
    doc["system"]["extra_knob"] = 1
    p = tmp_path / "p.json"
    p.write_text(json.dumps(doc))
    assert main(["certify", str(p)]) == 1
    err = capsys.readouterr().err
    assert "$.system" in err


def test_unknown_kind_rejected(tmp_path, capsys):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"kind": "mystery"}))
    assert main(["certify", str(p)]) == 1
    assert "/kind" in capsys.readouterr().err


def test_certify_pendulum(capsys):
    assert main(["certify", str(DATA / "pendulum.json")]) == 0
    out = capsys.readouterr().out
    assert "P =" in out
    assert "sector:" in out
    v_min_line = [l for l in out.splitlines() if l.startswith("v_min")][0]
    assert float(v_min_line.split("=")[1].split()[0]) > 0


def test_solve_sco_simulate_round_trip(toy_lure_file, tmp_path, capsys):
    out_dir = tmp_path / "out"
    assert main(["solve-sco", str(toy_lure_file), "--out", str(out_dir)]) == 0
    capsys.readouterr()
    sol_path = out_dir / "solution.json"
    sol = json.loads(sol_path.read_text())
    assert sol["status"] == "Optimal"
    assert sol["v_min"] > 0
    # solution accepted unchanged by simulate
    assert main(["simulate", str(toy_lure_file), "--from", str(sol_path),
                 "--out", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "stability:" in out
    assert (out_dir / "trajectory.csv").exists()
    header = (out_dir / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2"


def test_solve_sco_deterministic(toy_lure_file, tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    assert main(["solve-sco", str(toy_lure_file), "--out", str(a_dir)]) == 0
    assert main(["solve-sco", str(toy_lure_file), "--out", str(b_dir)]) == 0
    assert (a_dir / "solution.json").read_bytes() == \
        (b_dir / "solution.json").read_bytes()


def test_verify_pendulum_exits_0(capsys):
    assert main(["verify", str(DATA / "pendulum.json")]) == 0
    out = capsys.readouterr().out
    assert "counterexamples: 0" in out


def test_grid_solve_sco_simulate_round_trip(tmp_path, capsys):
    out_dir = tmp_path / "grid"
    problem = DATA / "threebus_problem.json"
    assert main(["solve-sco", str(problem), "--out", str(out_dir)]) == 0
    capsys.readouterr()
    sol_path = out_dir / "solution.json"
    sol = json.loads(sol_path.read_text())
    assert sol["status"] == "Optimal"
    assert sol["stability_label"] == "Stable"
    assert main(["simulate", str(problem), "--from", str(sol_path),
                 "--out", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "stability: Stable" in out
    assert (out_dir / "trajectory.csv").exists()


def test_missing_file_exits_1(capsys):
    assert main(["certify", "/nonexistent/problem.json"]) == 1


def test_entry_point_help():
    res = run_cli(["--help"])
    assert res.returncode == 0
    for sub in ("certify", "solve-sco", "simulate", "verify", "demo"):
        assert sub in res.stdout
