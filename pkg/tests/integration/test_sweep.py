import csv
import json
from pathlib import Path
from unittest.mock import patch

from cli.main import main
from engine.queue.config import map_rows
from engine.queue.tasks import (
    FATE_MAP_COLUMNS,
    SweepTask,
    check_unique_run_ids,
    planned_run_id,
    run_sweep_row,
)
from engine.telemetry.metrics import metrics


def _row_config(run_id: str, c: float = 0.9, b: float = 0.5) -> dict:
    return {
        "run_id": run_id,
        "params": {"n": 3, "b": b, "alpha": 2.0},
        "grid": {"kind": "radial", "dims": [512], "extent": [25.0]},
        "ground": {"points": 512, "extent": 25.0},
        "initial": {"preset": "ground_state_multiple", "c": c},
        "controls": {"dt": 1e-3, "t_end": 0.02, "sample_every": 10, "adaptive": False},
    }


def _fate_map(out: Path) -> list[dict]:
    with (out / "fate_map.csv").open(newline="") as fh:
        return list(csv.DictReader(fh))


def test_empty_sweep_writes_only_the_header(tmp_path):
    configs = tmp_path / "sweep.json"
    configs.write_text("[]")

    code = main(["sweep", "--configs", str(configs), "--out", str(tmp_path / "out")])

    assert code == 0
    header = (tmp_path / "out" / "fate_map.csv").read_text().splitlines()
    assert header == [",".join(FATE_MAP_COLUMNS)]


def test_one_bad_row_does_not_sink_the_sweep(tmp_path):
    """The bad row is recorded with its reason; the sweep exits with its code."""
    # 1. Setup
    configs = tmp_path / "sweep.json"
    configs.write_text(
        json.dumps({"configs": [_row_config("b_good"), _row_config("a_bad", b=2.5)]})
    )
    out = tmp_path / "out"

    # 2. Execution
    code = main(["sweep", "--configs", str(configs), "--out", str(out)])

    # 3. Verification
    rows = _fate_map(out)
    assert code == 2
    assert [r["run_id"] for r in rows] == ["a_bad", "b_good"]
    bad, good = rows
    assert bad["status"] == "failed" and bad["reason"] == "OutOfRange(b)"
    assert good["status"] == "ok"
    assert good["theorem"] == "BelowGlobal"
    assert good["observed_fate"] == "RanToEnd"
    assert (out / "b_good" / "diag.csv").exists()
    assert not (out / "a_bad").exists()


def test_config_paths_resolve_next_to_the_sweep_file(tmp_path):
    (tmp_path / "row.json").write_text(json.dumps(_row_config("from_file")))
    configs = tmp_path / "sweep.json"
    configs.write_text(json.dumps(["row.json"]))

    code = main(["sweep", "--configs", str(configs), "--out", str(tmp_path / "out")])

    assert code == 0
    assert _fate_map(tmp_path / "out")[0]["run_id"] == "from_file"


def test_crash_becomes_a_failed_row(tmp_path):
    task = SweepTask(index=4, entry=_row_config("boom"), out_root=str(tmp_path))

    with patch("engine.queue.tasks.run_experiment", side_effect=RuntimeError("worker died")):
        row = run_sweep_row(task)

    assert row["run_id"] == "boom"
    assert row["status"] == "failed"
    assert row["reason"] == "Unexpected(RuntimeError)"
    assert row["exit_code"] == 4
    assert metrics.get_snapshot()["runs:failed"] == 1


def test_unnamed_rows_get_positional_ids(tmp_path):
    entry = _row_config("x", b=2.5)
    del entry["run_id"]

    row = run_sweep_row(SweepTask(index=7, entry=entry, out_root=str(tmp_path)))

    assert row["run_id"] == "run007"
    assert row["exit_code"] == 2


def test_shared_run_ids_are_refused_before_any_row_runs(tmp_path, capsys):
    (tmp_path / "twin.json").write_text(json.dumps(_row_config("twin", c=0.8)))
    configs = tmp_path / "sweep.json"
    configs.write_text(json.dumps(["twin.json", _row_config("twin"), _row_config("solo")]))
    out = tmp_path / "out"

    with patch("engine.queue.tasks.run_experiment") as mock_run:
        code = main(["sweep", "--configs", str(configs), "--out", str(out)])

    payload = json.loads(capsys.readouterr().out)
    assert code == 3
    assert payload["reason"] == "OutputConflict(twin)"
    mock_run.assert_not_called()
    assert not out.exists()


def test_planned_ids_follow_the_entry(tmp_path):
    (tmp_path / "named.json").write_text(json.dumps(_row_config("inner")))
    (tmp_path / "plain.json").write_text("{not json")
    unnamed = _row_config("x")
    del unnamed["run_id"]

    tasks = [
        SweepTask(index=0, entry=tmp_path / "named.json", out_root=str(tmp_path)),
        SweepTask(index=1, entry=tmp_path / "plain.json", out_root=str(tmp_path)),
        SweepTask(index=2, entry=unnamed, out_root=str(tmp_path)),
    ]

    assert [planned_run_id(t) for t in tasks] == ["inner", "plain", "run002"]
    check_unique_run_ids(tasks)


def test_single_worker_runs_in_process():
    with patch("engine.queue.config.make_executor") as mock_pool:
        out = map_rows(lambda x: x * 2, [1, 2, 3], jobs=1)

    assert out == [2, 4, 6]
    mock_pool.assert_not_called()
