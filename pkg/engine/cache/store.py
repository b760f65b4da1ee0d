import csv
from pathlib import Path
from typing import Iterable, Sequence, Type, TypeVar

import structlog
from pydantic import BaseModel, ValidationError

from inls.errors import ConfigInvalid, OutputConflict
from inls.functionals import DiagnosticRecord, read_diagnostics_csv, write_diagnostics_csv
from inls.grid import Field as GridField
from inls.grid import read_field, write_field, write_field_csv
from inls.groundstate import GroundState, GroundStateSummary

logger = structlog.get_logger()

T = TypeVar("T", bound=BaseModel)

GROUND_JSON = "gs.json"
GROUND_FIELD = "q.field"
GROUND_CSV = "q.csv"


class ResultStore:
    """
    One output directory with pydantic-aware readers and writers.

    `claim()` refuses a directory that already holds files unless the store
    was opened with force; nothing is written before the claim succeeds.
    """

    def __init__(self, root: Path, force: bool = False) -> None:
        self.root = Path(root)
        self.force = force
        self._claimed = False

    def claim(self) -> "ResultStore":
        if self.root.exists() and any(self.root.iterdir()) and not self.force:
            raise OutputConflict(
                f"output directory {self.root} is not empty (use --force)",
                reason=f"OutputConflict({self.root})",
            )
        self.root.mkdir(parents=True, exist_ok=True)
        self._claimed = True
        logger.debug("store.claimed", root=str(self.root), force=self.force)
        return self

    def path(self, name: str) -> Path:
        return self.root / name

    def _target(self, name: str) -> Path:
        if not self._claimed:
            self.claim()
        return self.path(name)

    # --- Models ---

    def write_model(self, name: str, model: BaseModel) -> Path:
        target = self._target(name)
        target.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return target

    def read_model(self, name: str, model_cls: Type[T]) -> T:
        return load_model(self.path(name), model_cls)

    # --- Fields and time series ---

    def write_field(self, name: str, field: GridField) -> Path:
        target = self._target(name)
        write_field(field, target)
        return target

    def read_field(self, name: str) -> GridField:
        return read_field(self.path(name))

    def write_field_csv(self, name: str, field: GridField) -> Path:
        """Plain-text copy of a field for plotting tools."""
        target = self._target(name)
        write_field_csv(field, target)
        return target

    def write_diagnostics(self, name: str, records: Iterable[DiagnosticRecord]) -> Path:
        target = self._target(name)
        write_diagnostics_csv(records, target)
        return target

    def read_diagnostics(self, name: str) -> list[DiagnosticRecord]:
        return read_diagnostics_csv(self.path(name))

    def write_rows(self, name: str, header: Sequence[str], rows: Iterable[dict]) -> Path:
        target = self._target(name)
        with target.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: "" if row.get(k) is None else row.get(k) for k in header})
        return target

    # --- Ground states ---

    def save_ground_state(self, gs: GroundState) -> Path:
        self.write_field(GROUND_FIELD, gs.q)
        self.write_field_csv(GROUND_CSV, gs.q)
        return self.write_model(GROUND_JSON, gs.summary(q_file=GROUND_FIELD))


def load_model(path: Path, model_cls: Type[T]) -> T:
    """Reads a JSON file into a model; malformed files raise ConfigInvalid."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e.strerror}") from e
    try:
        return model_cls.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigInvalid(f"{path}: {loc}: {first['msg']}") from e


def load_ground_state(path: Path) -> GroundState:
    """gs.json plus the field file it names, resolved next to it."""
    path = Path(path)
    summary = load_model(path, GroundStateSummary)
    q = read_field(path.parent / summary.q_file)
    logger.debug("store.ground_state.loaded", path=str(path), residual=summary.residual)
    return summary.attach(q)
