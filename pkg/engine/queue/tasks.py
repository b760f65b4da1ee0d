import json
import math
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import structlog
from pydantic import BaseModel, ConfigDict

from engine.cache.store import ResultStore
from engine.schemas import ExperimentConfig, load_config, parse_config
from engine.settings import get_settings
from engine.telemetry.metrics import MetricKey, metrics
from inls.classify import Verdict, classify_data
from inls.errors import ExitCode, InlsError, OutputConflict
from inls.evolve import Trajectory, run
from inls.grid import Field as GridField
from inls.grid import Grid
from inls.groundstate import GroundState, SolverOptions, solve_ground_state
from inls.model import ModelParams
from tools.initial_data import build_initial

logger = structlog.get_logger()

FATE_MAP_COLUMNS = (
    "run_id",
    "theorem",
    "predicted_fate",
    "observed_fate",
    "fate_time",
    "status",
    "reason",
)


class Experiment(BaseModel):
    """Everything a config materializes to before time stepping."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    config: ExperimentConfig
    params: ModelParams
    grid: Grid
    gs: GroundState
    u0: GridField


class ExperimentOutcome(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    experiment: Experiment
    verdict: Verdict
    trajectory: Trajectory


class SweepTask(BaseModel):
    """Picklable unit of work for one fate-map row."""

    model_config = ConfigDict(frozen=True)

    index: int
    entry: Union[Path, dict[str, Any]]
    out_root: str
    force: bool = False


@lru_cache(maxsize=8)
def ground_state_for(params: ModelParams, grid: Grid, opts: SolverOptions) -> GroundState:
    """Per-process memo: sweep rows over one model share a single solve."""
    return solve_ground_state(params, grid, opts)


def prepare(config: ExperimentConfig) -> Experiment:
    params = config.params.build()
    grid = config.grid.build(params.n)
    gs = ground_state_for(params, config.ground.grid(params.n), config.ground.options(get_settings()))
    u0 = build_initial(config.initial, grid, seed=config.seed, gs=gs)
    return Experiment(config=config, params=params, grid=grid, gs=gs, u0=u0)


def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    """Classifies the initial data, then evolves it."""
    exp = prepare(config)
    verdict = classify_data(exp.u0, exp.gs)
    reference = exp.gs.q if exp.gs.q.grid == exp.grid else None
    trajectory = run(exp.u0, exp.params, config.controls, reference=reference)
    metrics.increment(MetricKey.RUNS_TOTAL)
    return ExperimentOutcome(experiment=exp, verdict=verdict, trajectory=trajectory)


def write_outcome(store: ResultStore, outcome: ExperimentOutcome) -> None:
    traj = outcome.trajectory
    store.write_diagnostics("diag.csv", traj.records)
    store.write_field("final.field", traj.final_field)
    store.write_field_csv("final.csv", traj.final_field)
    store.write_model("fate.json", traj.report())
    store.write_model("verdict.json", outcome.verdict)


def planned_run_id(task: SweepTask) -> str:
    """Directory name a row writes to, read from the raw entry before validation."""
    if isinstance(task.entry, Path):
        try:
            raw = json.loads(task.entry.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            raw = None
        hint = raw.get("run_id") if isinstance(raw, dict) else None
        return str(hint) if hint else task.entry.stem
    hint = task.entry.get("run_id")
    return str(hint) if hint else f"run{task.index:03d}"


def check_unique_run_ids(tasks: Sequence[SweepTask]) -> None:
    """
    Raises:
        OutputConflict: two rows would write to the same directory.
    """
    counts = Counter(planned_run_id(t) for t in tasks)
    shared = sorted(run_id for run_id, n in counts.items() if n > 1)
    if shared:
        raise OutputConflict(
            f"sweep rows share run ids: {', '.join(shared)}",
            reason=f"OutputConflict({shared[0]})",
        )


def _run_id(task: SweepTask, config: Optional[ExperimentConfig]) -> str:
    if config is not None and config.run_id:
        return config.run_id
    return planned_run_id(task)


def run_sweep_row(task: SweepTask) -> dict[str, Any]:
    """
    One fate-map row. Failures never escape: they become a failed row with
    the error's reason and exit code.
    """
    config: Optional[ExperimentConfig] = None
    run_id = _run_id(task, None)
    log = logger.bind(run_id=run_id)
    try:
        if isinstance(task.entry, Path):
            config = load_config(task.entry)
        else:
            config = parse_config(task.entry, source=f"configs[{task.index}]")
        run_id = _run_id(task, config)
        log = logger.bind(run_id=run_id)
        log.info("sweep.row.start")

        outcome = run_experiment(config)
        store = ResultStore(Path(task.out_root) / run_id, force=task.force).claim()
        write_outcome(store, outcome)

        fate = outcome.trajectory.fate
        log.info("sweep.row.done", theorem=outcome.verdict.theorem.value, fate=fate.kind.value)
        return {
            "run_id": run_id,
            "theorem": outcome.verdict.theorem.value,
            "predicted_fate": outcome.verdict.predicted_fate.value,
            "observed_fate": fate.kind.value,
            "fate_time": "" if fate.t is None or math.isnan(fate.t) else repr(fate.t),
            "status": "ok",
            "reason": "",
            "exit_code": int(ExitCode.OK),
        }
    except InlsError as e:
        metrics.increment(MetricKey.RUNS_FAILED)
        log.warning("sweep.row.failed", reason=e.reason, error=e.message)
        return {
            "run_id": run_id,
            "theorem": "",
            "predicted_fate": "",
            "observed_fate": "",
            "fate_time": "",
            "status": "failed",
            "reason": e.reason,
            "exit_code": int(e.exit_code),
        }
    except Exception as e:  # crashes are rows too
        metrics.increment(MetricKey.RUNS_FAILED)
        log.exception("sweep.row.crashed", error=str(e))
        return {
            "run_id": run_id,
            "theorem": "",
            "predicted_fate": "",
            "observed_fate": "",
            "fate_time": "",
            "status": "failed",
            "reason": f"Unexpected({type(e).__name__})",
            "exit_code": int(ExitCode.RUNTIME_GUARD),
        }
