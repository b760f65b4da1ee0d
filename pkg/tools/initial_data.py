from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from inls.errors import ConfigInvalid
from inls.grid import Field as GridField
from inls.grid import Grid, GridKind, Symmetry, mesh, radius, read_field, resample_radial
from inls.groundstate import GroundState

logger = structlog.get_logger()


# --- Recipes ---


class GaussianRecipe(BaseModel):
    """A·exp(-|x-x0|²/(2σ²))·e^{iλ|x|²}·e^{iv·x}."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Literal["gaussian"] = "gaussian"
    amplitude: float = 1.0
    sigma: float = Field(1.0, gt=0.0)
    center: tuple[float, ...] = ()
    phase_lambda: float = 0.0
    boost: tuple[float, ...] = ()


class GroundStateRecipe(BaseModel):
    """c·e^{iθ}·e^{iλ|x|²}·Q."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Literal["ground_state_multiple"] = "ground_state_multiple"
    c: float = 1.0
    phase: float = 0.0
    phase_lambda: float = 0.0


class RandomRecipe(BaseModel):
    """Seeded superposition of smooth Gaussian bumps with random complex weights."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Literal["random"] = "random"
    terms: int = Field(4, ge=1)
    amplitude: float = Field(1.0, gt=0.0)


class FileRecipe(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Literal["file"] = "file"
    path: str


InitialRecipe = Annotated[
    Union[GaussianRecipe, GroundStateRecipe, RandomRecipe, FileRecipe],
    Field(discriminator="preset"),
]


# --- Builders ---


def _padded(vec: tuple[float, ...], n: int, name: str) -> np.ndarray:
    if not vec:
        return np.zeros(n)
    if len(vec) != n:
        raise ConfigInvalid(f"{name} needs {n} components, got {len(vec)}")
    return np.asarray(vec, dtype=float)


def _cartesian_like(grid: Grid, vec: np.ndarray, name: str) -> list[tuple[np.ndarray, float]]:
    """Pairs (coordinate array, component) the grid can represent."""
    coords = mesh(grid)
    if grid.kind == GridKind.CARTESIAN:
        return list(zip(coords, vec))
    # staggered axes carry no translations or boosts; cylindrical keeps x_N
    transverse = vec[:-1] if grid.kind == GridKind.CYLINDRICAL else vec
    if np.any(transverse != 0.0):
        raise ConfigInvalid(f"{name} breaks the symmetry of a {grid.kind.value} grid")
    if grid.kind == GridKind.CYLINDRICAL:
        return [(coords[1], float(vec[-1]))]
    return []


def gaussian(grid: Grid, recipe: GaussianRecipe) -> GridField:
    n = grid.n
    center = _padded(recipe.center, n, "center")
    boost = _padded(recipe.boost, n, "boost")
    shifted = _cartesian_like(grid, center, "center")
    moving = _cartesian_like(grid, boost, "boost")

    r2 = radius(grid) ** 2
    if grid.kind == GridKind.CARTESIAN:
        dist2 = sum((x - c) ** 2 for x, c in shifted)
    else:
        dist2 = r2 + sum(c**2 - 2.0 * x * c for x, c in shifted)
    phase = recipe.phase_lambda * r2 + sum(v * x for x, v in moving)
    values = recipe.amplitude * np.exp(-dist2 / (2.0 * recipe.sigma**2)) * np.exp(1j * phase)

    symmetric = not np.any(center) and not np.any(boost)
    if grid.kind == GridKind.CARTESIAN:
        symmetry = Symmetry.RADIAL if symmetric else Symmetry.NONE
    elif grid.kind == GridKind.RADIAL:
        symmetry = Symmetry.RADIAL
    else:
        symmetry = Symmetry.CYLINDRICAL
    return GridField(grid=grid, values=values, symmetry=symmetry)


def ground_state_multiple(grid: Grid, recipe: GroundStateRecipe, gs: GroundState) -> GridField:
    q = gs.q if gs.q.grid == grid else resample_radial(gs.q, grid)
    phase = recipe.phase + recipe.phase_lambda * radius(grid) ** 2
    return q.with_values(recipe.c * q.values * np.exp(1j * phase))


def random_field(grid: Grid, recipe: RandomRecipe, rng: np.random.Generator) -> GridField:
    """
    Sum of `terms` Gaussians with random widths and complex weights.

    Radial and cylindrical grids keep every bump centered on their symmetry
    axis; Cartesian grids also draw centers and boosts.
    """
    scale = min(grid.extent)
    r2 = radius(grid) ** 2
    values = np.zeros(grid.shape, dtype=np.complex128)
    for _ in range(recipe.terms):
        weight = rng.normal() + 1j * rng.normal()
        width = rng.uniform(0.08, 0.2) * scale
        if grid.kind == GridKind.CARTESIAN:
            coords = mesh(grid)
            center = rng.uniform(-0.15, 0.15, size=grid.n) * scale
            boost = rng.uniform(-1.0, 1.0, size=grid.n)
            dist2 = sum((x - c) ** 2 for x, c in zip(coords, center))
            phase = sum(v * x for x, v in zip(coords, boost))
        else:
            dist2 = r2
            phase = rng.uniform(-0.2, 0.2) * r2
        values += weight * np.exp(-dist2 / (2.0 * width**2) + 1j * phase)
    values *= recipe.amplitude / max(float(np.max(np.abs(values))), 1e-300)
    return GridField(grid=grid, values=values)


def from_file(grid: Grid, recipe: FileRecipe) -> GridField:
    field = read_field(Path(recipe.path))
    if field.grid != grid:
        raise ConfigInvalid(f"{recipe.path} lives on a different grid than the config")
    return field


def build_initial(
    recipe: InitialRecipe,
    grid: Grid,
    seed: int = 0,
    gs: Optional[GroundState] = None,
) -> GridField:
    """Materializes a recipe on `grid`; deterministic given the seed."""
    if isinstance(recipe, GaussianRecipe):
        field = gaussian(grid, recipe)
    elif isinstance(recipe, GroundStateRecipe):
        if gs is None:
            raise ConfigInvalid("ground_state_multiple needs a ground state")
        field = ground_state_multiple(grid, recipe, gs)
    elif isinstance(recipe, RandomRecipe):
        field = random_field(grid, recipe, np.random.default_rng(seed))
    else:
        field = from_file(grid, recipe)
    logger.debug("initial_data.built", preset=recipe.preset, grid=grid.kind.value, seed=seed)
    return field
