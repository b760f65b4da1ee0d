import argparse
from pathlib import Path

import structlog

from cli.output import rows_table, stdout
from engine.cache.store import ResultStore
from engine.queue.config import map_rows
from engine.queue.tasks import FATE_MAP_COLUMNS, SweepTask, check_unique_run_ids, run_sweep_row
from engine.schemas import load_sweep
from engine.settings import LabSettings

logger = structlog.get_logger()


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    p = sub.add_parser("sweep", parents=[common], help="Run many configs; write fate_map.csv")
    p.add_argument("--configs", type=Path, required=True, help="JSON list of configs or config paths")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: LabSettings) -> int:
    entries = load_sweep(args.configs)
    out = args.out or Path("out")
    tasks = [SweepTask(index=i, entry=e, out_root=str(out), force=True) for i, e in enumerate(entries)]
    check_unique_run_ids(tasks)
    store = ResultStore(out, force=args.force).claim()

    rows = sorted(map_rows(run_sweep_row, tasks, args.jobs), key=lambda r: r["run_id"])
    store.write_rows("fate_map.csv", FATE_MAP_COLUMNS, rows)

    stdout.print(rows_table("Fate map", FATE_MAP_COLUMNS, rows))
    failed = [r for r in rows if r["status"] != "ok"]
    logger.info("cli.sweep.done", rows=len(rows), failed=len(failed))
    return max((r["exit_code"] for r in failed), default=0)
