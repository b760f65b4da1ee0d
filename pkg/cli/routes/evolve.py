import argparse
from pathlib import Path

import structlog

from cli.output import key_value_table, stdout
from engine.cache.store import ResultStore
from engine.queue.tasks import run_experiment, write_outcome
from engine.schemas import load_config
from engine.settings import LabSettings

logger = structlog.get_logger()


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    p = sub.add_parser(
        "evolve", parents=[common], help="Evolve initial data; write diag.csv, final.field, final.csv, fate.json"
    )
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: LabSettings) -> int:
    config = load_config(args.config)
    store = ResultStore(args.out or Path(config.outputs), force=args.force).claim()

    outcome = run_experiment(config)
    write_outcome(store, outcome)

    report = outcome.trajectory.report()
    stdout.print(
        key_value_table(
            "Evolution",
            [
                ("predicted", outcome.verdict.predicted_fate.value),
                ("observed", report.fate.value),
                ("fate time", "" if report.fate_time is None else report.fate_time),
                ("t reached", report.t_reached),
                ("steps", report.steps),
                ("final dt", report.dt_final),
            ],
        )
    )
    logger.info("cli.evolve.done", out=str(store.root), fate=report.fate.value)
    return 0
