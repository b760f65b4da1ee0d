import json
from typing import Any, Iterable, Sequence

from pydantic import BaseModel
from rich import box
from rich.console import Console
from rich.table import Table

# Tables and verdicts go to stdout; logs stay on the stderr console.
stdout = Console(soft_wrap=True)


def emit_json(payload: Any) -> None:
    """Single machine-readable line (or document) on stdout."""
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True)
    stdout.print(text, markup=False, highlight=False)


def key_value_table(title: str, rows: Iterable[tuple[str, Any]]) -> Table:
    table = Table(title=title, box=box.SIMPLE_HEAD)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")
    for name, value in rows:
        table.add_row(name, f"{value:.10g}" if isinstance(value, float) else str(value))
    return table


def rows_table(title: str, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> Table:
    table = Table(title=title, box=box.SIMPLE_HEAD)
    for col in columns:
        table.add_column(col)
    for row in rows:
        style = "red" if row.get("status") == "failed" else None
        table.add_row(*(str(row.get(c, "")) for c in columns), style=style)
    return table
