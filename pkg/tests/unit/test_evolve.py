import math
from unittest.mock import patch

import numpy as np
import pytest

from engine.telemetry.metrics import metrics
from inls.errors import BoundaryContaminated, InsufficientSamples, OutOfRange, StepNotConverged
from inls.evolve import (
    EvolveControls,
    FateKind,
    _power_mean,
    conservation_drifts,
    free_flow,
    run,
    step,
    virial_consistency,
)
from inls.grid import (
    Field,
    Grid,
    GridKind,
    axis_coordinates,
    effective_weight,
    radius,
    singular_weight,
)
from inls.model import ModelParams

PARAMS_1D = ModelParams(n=1, b=0.5, alpha=4.0)


def _line(points: int = 512, extent: float = 40.0) -> Grid:
    return Grid(kind=GridKind.CARTESIAN, n=1, dims=(points,), extent=(extent,))


def _gaussian(grid: Grid, amplitude: float = 1.0) -> Field:
    return Field(grid=grid, values=amplitude * np.exp(-radius(grid) ** 2 / 2.0))


def test_controls_need_dt_above_floor():
    with pytest.raises(OutOfRange) as exc:
        EvolveControls(dt=1e-6, dt_min=1e-6)

    assert exc.value.reason == "OutOfRange(dt)"


def test_zero_field_stays_zero():
    grid = _line(64, 10.0)
    u = Field.zeros(grid)

    out = step(u, 1e-2, PARAMS_1D, singular_weight(grid, PARAMS_1D.b))

    assert not np.any(out.values)


def test_free_flow_of_a_fourier_mode():
    """e^{ikx} picks up exactly e^{-ik²τ} on a periodic grid."""
    grid = Grid(kind=GridKind.CARTESIAN, n=1, dims=(64,), extent=(np.pi,))
    x = axis_coordinates(grid)[0]
    mode = np.exp(3j * x)

    out = free_flow(grid, mode, 0.37)

    assert np.max(np.abs(out - np.exp(-9j * 0.37) * mode)) < 1e-12


@pytest.mark.parametrize(
    "grid",
    [
        Grid(kind=GridKind.CARTESIAN, n=1, dims=(256,), extent=(20.0,)),
        Grid(kind=GridKind.RADIAL, n=1, dims=(256,), extent=(20.0,)),
    ],
)
def test_step_is_time_reversible(grid):
    u = _gaussian(grid, amplitude=1.4)
    w = singular_weight(grid, PARAMS_1D.b)

    back = step(step(u, 1e-2, PARAMS_1D, w), -1e-2, PARAMS_1D, w)

    assert np.max(np.abs(back.values - u.values)) < 1e-12


def test_boundary_mass_at_start_is_refused():
    grid = _line(64, 4.0)
    wide = Field(grid=grid, values=np.ones(64))

    with pytest.raises(BoundaryContaminated):
        run(wide, PARAMS_1D, EvolveControls(t_end=0.01))


def test_single_step_on_the_ground_state_only_turns_its_phase(gs_3d):
    """(1 + i·dt/2)/(1 - i·dt/2)·Q is the exact image of a discrete Q."""
    dt = 1e-3
    q = gs_3d.q
    w = effective_weight(q.grid, gs_3d.params.b)

    out = step(q, dt, gs_3d.params, w)

    top = float(np.max(np.abs(q.values)))
    assert np.max(np.abs(np.abs(out.values) - np.abs(q.values))) / top <= 1e-6
    assert np.angle(out.values[0]) == pytest.approx(2.0 * math.atan(dt / 2.0), abs=1e-9)


@pytest.mark.slow
def test_soliton_keeps_its_modulus(gs_3d):
    """u0 = Q rotates in phase only; mass and energy stay put."""
    controls = EvolveControls(dt=1e-3, t_end=5.0, sample_every=100, adaptive=False)

    traj = run(gs_3d.q, gs_3d.params, controls, reference=gs_3d.q)
    drifts = conservation_drifts(traj.records)

    assert traj.fate.kind == FateKind.RAN_TO_END
    assert traj.steps == 5000
    assert len(traj.records) == 51
    assert max(s.modulus_deviation for s in traj.reference) <= 1e-4
    assert drifts.mass <= 1e-8
    assert drifts.energy <= 1e-8


def test_radial_step_conserves_mass_and_energy():
    """A focusing, non-stationary bump keeps both invariants even at a coarse dt."""
    params = ModelParams(n=3, b=0.5, alpha=2.0)
    grid = Grid(kind=GridKind.RADIAL, n=3, dims=(1024,), extent=(20.0,))
    u0 = Field(grid=grid, values=1.5 * np.exp(-radius(grid) ** 2 / 2.0 + 0.2j * radius(grid) ** 2))
    controls = EvolveControls(dt=1e-2, t_end=0.2, sample_every=1, adaptive=False)

    drifts = conservation_drifts(run(u0, params, controls).records)

    assert drifts.mass <= 1e-10
    assert drifts.energy <= 1e-10


def test_power_mean_on_and_off_the_diagonal():
    a = np.array([0.0, 0.5, 2.0, 2.0])
    c = np.array([3.0, 0.5, 2.0 + 1e-14, 1.0])

    phi, slope = _power_mean(a, c, 2.0)

    # q = 2: Φ = (a + c)/2 and ∂Φ/∂c = 1/2 everywhere
    assert np.allclose(phi, (a + c) / 2.0, rtol=1e-12)
    assert np.allclose(slope, 0.5, rtol=1e-6)


def test_unsettled_implicit_step_halves_dt():
    """Each failed solve halves dt; at the floor the run stops as StepFloorHit."""
    grid = Grid(kind=GridKind.RADIAL, n=1, dims=(128,), extent=(20.0,))
    controls = EvolveControls(dt=1e-2, dt_min=2.5e-3, t_end=1.0, adaptive=False)
    failure = StepNotConverged(1e-2, 30, 1e-3)

    with patch("inls.evolve._conservative_step", side_effect=failure):
        traj = run(_gaussian(grid), PARAMS_1D, controls)

    assert traj.fate.kind == FateKind.STEP_FLOOR_HIT
    assert traj.fate.note == "StepNotConverged"
    assert traj.dt_final == pytest.approx(2.5e-3)
    assert metrics.get_snapshot()["steps:dt_halvings"] == 2
    assert metrics.get_snapshot()["steps:rejected"] == 3


def test_free_flow_obeys_the_virial_identity():
    """Without the nonlinearity V is exactly quadratic in t with V'' = 8‖∇u‖²."""
    grid = _line()
    controls = EvolveControls(dt=1e-2, t_end=2.0, sample_every=5, nonlinear=False, adaptive=False)

    traj = run(_gaussian(grid), PARAMS_1D, controls)

    assert traj.fate.kind == FateKind.RAN_TO_END
    assert all(r.potential == 0.0 for r in traj.records)
    assert virial_consistency(traj) < 1e-6
    assert conservation_drifts(traj.records).energy < 1e-10


def test_too_few_samples_for_the_virial_check():
    grid = _line()
    controls = EvolveControls(dt=1e-3, t_end=0.03, sample_every=10, adaptive=False)

    traj = run(_gaussian(grid), PARAMS_1D, controls)

    assert len(traj.records) == 4
    with pytest.raises(InsufficientSamples):
        virial_consistency(traj)


def test_gradient_growth_stops_the_run():
    """A tiny blow-up factor fires on the first sample of a focusing run."""
    grid = _line()
    controls = EvolveControls(
        dt=1e-3, t_end=1.0, sample_every=1, blowup_grad_factor=1.0 + 1e-9, adaptive=False
    )
    u0 = Field(grid=grid, values=2.0 * np.exp(-radius(grid) ** 2 / 2.0 - 0.5j * radius(grid) ** 2))

    traj = run(u0, PARAMS_1D, controls)

    assert traj.fate.kind == FateKind.BLOWUP_DETECTED
    assert traj.fate.t == pytest.approx(1e-3)


def test_free_dispersal_is_reported():
    """A weak narrow bump spreads out; P relative to t = 0 collapses."""
    grid = _line(2048, 200.0)
    controls = EvolveControls(
        dt=1e-2, t_end=5.0, sample_every=10, scatter_p_floor=0.5, scatter_window=3, adaptive=False
    )
    u0 = Field(grid=grid, values=0.3 * np.exp(-radius(grid) ** 2 / 0.5))

    traj = run(u0, PARAMS_1D, controls)

    assert traj.fate.kind == FateKind.DISPERSED
    assert "heuristic" in traj.fate.note


def test_step_floor_hit():
    """An unreachable energy tolerance halves dt down to the floor."""
    grid = _line()
    controls = EvolveControls(dt=1e-2, dt_min=2.5e-3, t_end=1.0, energy_tol=1e-300)

    traj = run(_gaussian(grid, amplitude=1.5), PARAMS_1D, controls)

    assert traj.fate.kind == FateKind.STEP_FLOOR_HIT
    assert traj.dt_final == pytest.approx(2.5e-3)
    assert metrics.get_snapshot()["steps:dt_halvings"] == 2


def test_variance_fd_fills_interior_samples():
    grid = _line()
    controls = EvolveControls(dt=1e-2, t_end=0.5, sample_every=5, adaptive=False)

    records = run(_gaussian(grid), PARAMS_1D, controls).records

    assert np.isnan(records[0].variance_d2_fd) and np.isnan(records[-1].variance_d2_fd)
    assert all(np.isfinite(r.variance_d2_fd) for r in records[1:-1])


@pytest.mark.slow
def test_energy_error_is_second_order():
    """Halving dt cuts the energy drift by about four."""
    grid = _line(1024, 40.0)
    u0 = _gaussian(grid, amplitude=0.5)

    drifts = []
    for dt in (2e-3, 1e-3):
        controls = EvolveControls(dt=dt, dt_min=1e-5, t_end=1.0, sample_every=10, adaptive=False)
        traj = run(u0, PARAMS_1D, controls)
        d = conservation_drifts(traj.records)
        assert d.mass < 1e-10
        drifts.append(d.energy)

    assert 3.5 <= drifts[0] / drifts[1] <= 4.5
