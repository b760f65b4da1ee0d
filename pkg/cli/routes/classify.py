import argparse
import json
from pathlib import Path
from typing import Optional

import structlog
from pydantic import BaseModel, ConfigDict, TypeAdapter, ValidationError

from cli.output import emit_json
from engine.cache.store import ResultStore, load_ground_state
from engine.queue.tasks import ground_state_for
from engine.schemas import GroundSpec, load_config, load_params
from engine.settings import LabSettings
from inls.classify import AboveThresholdReport, Theorem, Verdict, classify_above, classify_data
from inls.errors import ConfigInvalid
from inls.grid import Field as GridField
from inls.grid import read_field
from inls.groundstate import GroundState
from inls.model import ModelParams
from tools.initial_data import InitialRecipe, build_initial

logger = structlog.get_logger()

_ABOVE = (Theorem.ABOVE_SCATTER, Theorem.ABOVE_BLOWUP)


class ClassifyResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    verdict: Verdict
    above: Optional[AboveThresholdReport] = None


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    p = sub.add_parser("classify", parents=[common], help="Print the verdict for initial data as JSON")
    p.add_argument("--config", type=Path, help="Experiment config; its recipe is the datum")
    p.add_argument("--params", type=Path, help="Params JSON {n, b, alpha}")
    p.add_argument("--ground", type=Path, help="gs.json from a previous `ground` run")
    p.add_argument(
        "--data",
        help="Field file, a preset name, or a JSON recipe (inline or .json) evaluated on the ground-state grid",
    )
    p.set_defaults(handler=run)


def _ground_state(
    args: argparse.Namespace, settings: LabSettings, spec: GroundSpec, params: ModelParams
) -> GroundState:
    if args.ground:
        gs = load_ground_state(args.ground)
        if gs.params != params:
            raise ConfigInvalid(f"{args.ground} was computed for different parameters")
        return gs
    return ground_state_for(params, spec.grid(params.n), spec.options(settings))


def _recipe(data: str) -> Optional[InitialRecipe]:
    """A recipe from a .json file, inline JSON or a bare preset name; None for a field file."""
    try:
        if data.endswith(".json"):
            raw = json.loads(Path(data).read_text(encoding="utf-8"))
        elif data.lstrip().startswith("{"):
            raw = json.loads(data)
        elif Path(data).suffix or Path(data).exists():
            return None
        else:
            raw = {"preset": data}
        return TypeAdapter(InitialRecipe).validate_python(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ConfigInvalid(f"{data}: not a usable recipe ({e})") from e


def _datum(
    args: argparse.Namespace, gs: GroundState, default: Optional[GridField], seed: int = 0
) -> GridField:
    if not args.data:
        if default is None:
            raise ConfigInvalid("classify needs --data or a --config with an initial recipe")
        return default
    recipe = _recipe(args.data)
    if recipe is None:
        return read_field(Path(args.data))
    return build_initial(recipe, gs.q.grid, seed=seed, gs=gs)


def run(args: argparse.Namespace, settings: LabSettings) -> int:
    default: Optional[GridField] = None
    seed = 0
    if args.config:
        config = load_config(args.config)
        params = config.params.build()
        gs = _ground_state(args, settings, config.ground, params)
        seed = config.seed
        if not args.data:
            default = build_initial(config.initial, config.grid.build(params.n), seed=config.seed, gs=gs)
    elif args.params:
        params = load_params(args.params).build()
        gs = _ground_state(args, settings, GroundSpec(), params)
    else:
        raise ConfigInvalid("classify needs --config or --params")

    u0 = _datum(args, gs, default, seed)
    verdict = classify_data(u0, gs)
    above = classify_above(u0, gs).report if verdict.theorem in _ABOVE else None
    result = ClassifyResult(verdict=verdict, above=above)

    if args.out:
        ResultStore(args.out, force=args.force).claim().write_model("verdict.json", result)
    emit_json(result)
    logger.info("cli.classify.done", theorem=verdict.theorem.value)
    return 0
