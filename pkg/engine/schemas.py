import json
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from engine.settings import LabSettings
from inls.errors import ConfigInvalid
from inls.evolve import EvolveControls
from inls.grid import Grid, GridKind
from inls.groundstate import SolverOptions
from inls.model import ModelParams
from tools.initial_data import GroundStateRecipe, InitialRecipe

# --- Config contracts ---
# Kept apart from the domain types so the file format can evolve on its own.


class ParamsSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int
    b: float
    alpha: float
    validation_mode: bool = False

    def build(self) -> ModelParams:
        return ModelParams(n=self.n, b=self.b, alpha=self.alpha, validation_mode=self.validation_mode)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: GridKind = GridKind.RADIAL
    dims: tuple[int, ...] = (2048,)
    extent: tuple[float, ...] = (30.0,)
    offset: tuple[float, ...] = ()
    weight_eps: Optional[float] = None

    def build(self, n: int) -> Grid:
        offset = self.offset if any(self.offset) else ()
        return Grid(
            kind=self.kind,
            n=n,
            dims=self.dims,
            extent=self.extent,
            offset=offset,
            weight_eps=self.weight_eps,
        )


class GroundSpec(BaseModel):
    """Radial grid and solver options for Q; independent of the evolution grid."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    points: int = Field(2048, ge=8)
    extent: float = Field(30.0, gt=0.0)
    tol: Optional[float] = Field(None, gt=0.0)
    residual_tol: Optional[float] = Field(None, gt=0.0)
    max_iter: Optional[int] = Field(None, ge=1)
    relax: float = Field(1.0, gt=0.0, le=1.0)

    def grid(self, n: int) -> Grid:
        return Grid(kind=GridKind.RADIAL, n=n, dims=(self.points,), extent=(self.extent,))

    def options(self, settings: LabSettings) -> SolverOptions:
        return SolverOptions(
            tol=self.tol or settings.ground_tol,
            residual_tol=self.residual_tol or settings.ground_residual_tol,
            max_iter=self.max_iter or settings.ground_max_iter,
            relax=self.relax,
        )


class ExperimentConfig(BaseModel):
    """One experiment: model, grid, data, controls and where results go."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    run_id: Optional[str] = None
    params: ParamsSpec
    grid: GridSpec = GridSpec()
    ground: GroundSpec = GroundSpec()
    initial: InitialRecipe = GroundStateRecipe()
    controls: EvolveControls = EvolveControls()
    outputs: str = "out"
    seed: int = 0


class SweepFile(BaseModel):
    """Either inline configs or paths to config files, relative to the sweep file."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    configs: list[Union[str, dict[str, Any]]] = Field(default_factory=list)


# --- Loaders ---


def _first_error(e: ValidationError) -> str:
    first = e.errors()[0]
    loc = ".".join(str(p) for p in first["loc"])
    return f"{loc}: {first['msg']}" if loc else first["msg"]


def parse_config(raw: Any, source: str = "<inline>") -> ExperimentConfig:
    """
    Validates a decoded config.

    Raises:
        OutOfRange: a parameter or control left its admissible range.
        ConfigInvalid: unknown keys, wrong types or a malformed recipe.
    """
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigInvalid(f"{source}: {_first_error(e)}") from e


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e


def load_config(path: Path) -> ExperimentConfig:
    return parse_config(_read_json(path), source=str(path))


def load_params(path: Path) -> ParamsSpec:
    try:
        return ParamsSpec.model_validate(_read_json(path))
    except ValidationError as e:
        raise ConfigInvalid(f"{path}: {_first_error(e)}") from e


def load_sweep(path: Path) -> list[Union[Path, dict[str, Any]]]:
    """
    Sweep entries: inline configs or config paths resolved next to the sweep file.

    Entries are validated per row later so that one bad config cannot sink
    the others. A bare JSON list is shorthand for {"configs": [...]}.
    """
    raw = _read_json(path)
    if isinstance(raw, list):
        raw = {"configs": raw}
    try:
        sweep = SweepFile.model_validate(raw)
    except ValidationError as e:
        raise ConfigInvalid(f"{path}: {_first_error(e)}") from e
    return [Path(path).parent / item if isinstance(item, str) else item for item in sweep.configs]
