import csv
import json

import pytest

from branchmpc.cli import PLAN_COLUMNS, SWEEP_COLUMNS, TRACE_COLUMNS, main


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_plan_merging(tmp_path):
    assert main(["plan", "--config", "merging", "--out", str(tmp_path), "--seed", "5"]) == 0
    rows = _rows(tmp_path / "plan.csv")
    assert rows[0] == PLAN_COLUMNS
    assert {r[0] for r in rows[1:]} == {"fast", "keep", "slow"}
    meta = json.loads((tmp_path / "plan.json").read_text())
    assert meta["seed"] == 5 and len(meta["config_hash"]) == 16
    assert meta["branches"] == ["fast", "keep", "slow"]


def test_run_is_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--config", "merging", "--seed", "9", "--out",
                     str(tmp_path / d)]) == 0
    for f in ("trace.csv", "events.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert _rows(tmp_path / "a" / "trace.csv")[0] == TRACE_COLUMNS


def test_sweep_table(tmp_path):
    code = main(["sweep", "--config", "traffic_light", "--grid", "0,1", "--trials", "2",
                 "--planner", "prescient", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert rows[0] == SWEEP_COLUMNS and len(rows) == 3


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "kind": "merging"}))
    assert main(["plan", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "geometry" in capsys.readouterr().err


def test_fallback_exit(tmp_path):
    from branchmpc.config import bundled, save_config
    from dataclasses import replace
    from branchmpc.dynamics import VehicleState
    cfg = bundled("traffic_light")
    cfg = replace(cfg, av=VehicleState(95.0, 15.0),
                  decision=replace(cfg.decision, probabilities=(0.0, 1.0)))
    save_config(cfg, tmp_path / "late.json")
    code = main(["plan", "--config", str(tmp_path / "late.json"), "--out", str(tmp_path)])
    assert code == 3
    assert json.loads((tmp_path / "plan.json").read_text())["fallback"] is True
