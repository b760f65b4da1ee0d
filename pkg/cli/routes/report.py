import argparse
from pathlib import Path

import structlog

from cli.output import key_value_table, stdout
from engine.cache.store import ResultStore, load_ground_state
from engine.settings import LabSettings
from inls.classify import runtime_criteria
from inls.errors import InsufficientSamples
from inls.evolve import Fate, FateReport, Trajectory, conservation_drifts, virial_consistency

logger = structlog.get_logger()


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    p = sub.add_parser("report", parents=[common], help="Summarize an evolve output directory")
    p.add_argument("--run", type=Path, required=True, help="Directory written by `evolve`")
    p.add_argument("--ground", type=Path, help="gs.json for the runtime criteria")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: LabSettings) -> int:
    store = ResultStore(args.run)
    fate = store.read_model("fate.json", FateReport)
    traj = Trajectory(
        records=store.read_diagnostics("diag.csv"),
        fate=Fate(kind=fate.fate, t=fate.fate_time, note=fate.note),
        final_field=store.read_field("final.field"),
        steps=fate.steps,
        dt_final=fate.dt_final,
    )

    drifts = conservation_drifts(traj.records)
    try:
        virial: object = virial_consistency(traj)
    except InsufficientSamples as e:
        virial = f"n/a ({e.message})"

    rows: list[tuple[str, object]] = [
        ("fate", fate.fate.value),
        ("fate time", "" if fate.fate_time is None else fate.fate_time),
        ("note", fate.note),
        ("t reached", fate.t_reached),
        ("samples", fate.samples),
        ("mass drift", drifts.mass),
        ("energy drift", drifts.energy),
        ("virial consistency", virial),
    ]
    if args.ground:
        crit = runtime_criteria(traj, load_ground_state(args.ground))
        rows += [
            ("scat margin min", crit.scat_margin_min),
            ("blow margin max", crit.blow_margin_max),
            ("scatter criterion on window", crit.scatter_certified),
            ("blow-up criterion on window", crit.blowup_certified),
            ("delta", crit.delta),
        ]
    stdout.print(key_value_table(f"Run report: {args.run}", rows))
    logger.info("cli.report.done", run=str(args.run))
    return 0
