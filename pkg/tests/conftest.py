import pytest

from engine.telemetry.metrics import metrics
from inls.grid import Grid, GridKind
from inls.groundstate import GroundState, solve_ground_state
from inls.model import ModelParams


def radial_grid(n: int, points: int = 2048, extent: float = 30.0) -> Grid:
    return Grid(kind=GridKind.RADIAL, n=n, dims=(points,), extent=(extent,))


@pytest.fixture(autouse=True)
def _fresh_metrics():
    metrics.reset()
    yield
    metrics.reset()


@pytest.fixture(scope="session")
def params_3d() -> ModelParams:
    return ModelParams(n=3, b=0.5, alpha=2.0)


@pytest.fixture(scope="session")
def gs_3d(params_3d: ModelParams) -> GroundState:
    """Q for N=3, b=0.5, alpha=2 on the default radial grid."""
    return solve_ground_state(params_3d, radial_grid(3))


@pytest.fixture(scope="session")
def gs_2d() -> GroundState:
    return solve_ground_state(ModelParams(n=2, b=0.5, alpha=3.0), radial_grid(2))


@pytest.fixture(scope="session")
def gs_sech() -> GroundState:
    """b = 0, N = 1, alpha = 2: Q = √2 sech(x)."""
    return solve_ground_state(ModelParams.validation(n=1, alpha=2.0), radial_grid(1))


FINE_EXTENT = {1: 24.0, 2: 28.0, 3: 30.0}


@pytest.fixture(scope="session")
def fine_ground_state():
    """Q on a 4096-point radial grid, solved once per (N, b, alpha)."""
    solved: dict[tuple[int, float, float], GroundState] = {}

    def solve(n: int, b: float, alpha: float) -> GroundState:
        key = (n, b, alpha)
        if key not in solved:
            grid = radial_grid(n, points=4096, extent=FINE_EXTENT[n])
            solved[key] = solve_ground_state(ModelParams(n=n, b=b, alpha=alpha), grid)
        return solved[key]

    return solve
