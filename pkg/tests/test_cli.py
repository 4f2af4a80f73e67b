import csv
import json

import numpy as np
import pytest

from clockdyn import cli, config
from clockdyn.joint import HEADER_SIZE, load_state

SMALL = {
    "grid": {"n_points": 256, "length": 64.0},
    "pulse": {"x0": -10.0, "omega": 1.0, "k0": 2.0},
    "dispersion": {"kind": "linear"},
    "engine": {"dim": 2, "H_E": {"preset": "pauli_z", "scale": 0.3}, "schedule": {"generators": []}},
    "windows": {"W": 8.0, "origin": -16.0},
    "stepping": {"dt": 0.05, "steps_per_record": 10},
    "run": {"duration": 10.0},
}


def _write(tmp_path, tree, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree, indent=2))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_outputs(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--quiet", "run", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    rows = _rows(out / "trajectory.csv")
    assert len(rows) == 21
    mean_t = np.array([float(r["mean_T"]) for r in rows])
    assert np.all(np.diff(mean_t) > 0)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["D_final"] == pytest.approx(float(rows[-1]["D"]))
    assert summary["truncated"] is False
    raw = (out / "final_state.qclk").read_bytes()
    assert raw[:4] == b"QCLK" and len(raw) == HEADER_SIZE + 2 * 256 * 16
    assert load_state(out / "final_state.qclk").norm == pytest.approx(1.0, abs=1e-10)


def test_run_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for name in ("a", "b"):
        assert cli.main(["--quiet", "run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_mode_override_stamped(tmp_path):
    out = tmp_path / "out"
    args = ["--quiet", "run", "--config", _write(tmp_path, SMALL), "--out", str(out), "--mode", "paper_sqrt"]
    assert cli.main(args) == 0
    assert {r["mode"] for r in _rows(out / "trajectory.csv")} == {"paper_sqrt"}


def test_wraparound_exit_two(tmp_path, capsys):
    tree = json.loads(json.dumps(SMALL))
    tree["pulse"]["x0"] = 20.0
    tree["run"]["duration"] = 20.0
    out = tmp_path / "out"
    assert cli.main(["--quiet", "run", "--config", _write(tmp_path, tree), "--out", str(out)]) == cli.EXIT_GUARD
    assert "truncated" in capsys.readouterr().err
    assert "wraparound" in _rows(out / "trajectory.csv")[-1]["flags"]


def test_bad_config_exit_one(tmp_path, capsys):
    tree = json.loads(json.dumps(SMALL))
    tree["dispersion"]["kind"] = "quadratic"
    assert cli.main(["run", "--config", _write(tmp_path, tree)]) == cli.EXIT_CONFIG
    assert "dispersion.kind" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err


def test_verify_and_fault(capsys):
    assert cli.main(["verify"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert cli.main(["verify", "--inject-fault", "dispersion-derivative"]) != 0
    assert "FAIL" in capsys.readouterr().out


def test_oracle_subcommand(capsys):
    assert cli.main(["oracle", "--instance", "n16"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert float(line.split("=")[1]) == pytest.approx(2.0, abs=0.2)


def test_single_point_sweep_matches_run(tmp_path):
    tree = json.loads(json.dumps(SMALL))
    tree["sweep"] = {"axes": {"omega": [1.0]}}
    out = tmp_path / "sweep"
    assert cli.main(["--quiet", "sweep", "--config", _write(tmp_path, tree), "--out", str(out)]) == 0
    rows = _rows(out / "sweep.csv")
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    _, _, summary = cli.simulate(config.from_dict(SMALL))
    assert float(rows[0]["D_final"]) == summary["D_final"]


def test_sweep_flags_failed_point(tmp_path):
    tree = json.loads(json.dumps(SMALL))
    # omega = 40 is far below the grid resolution and must fail without aborting the sweep
    tree["sweep"] = {"axes": {"omega": [1.0, 40.0]}}
    out = tmp_path / "sweep"
    assert cli.main(["--quiet", "sweep", "--config", _write(tmp_path, tree), "--out", str(out)]) == 0
    rows = _rows(out / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok", "failed"]
    assert rows[1]["message"]


def test_sweep_header(tmp_path):
    tree = json.loads(json.dumps(SMALL))
    tree["sweep"] = {"axes": {"dt": [0.05, 0.025]}, "oracle": False}
    out = tmp_path / "sweep"
    assert cli.main(["--quiet", "sweep", "--config", _write(tmp_path, tree), "--out", str(out), "--jobs", "2"]) == 0
    header = (out / "sweep.csv").read_text().splitlines()[0]
    assert header == "point,dt," + ",".join(cli.SWEEP_RESULT_COLUMNS)
