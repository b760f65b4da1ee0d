import math

import numpy as np
import pytest
from scipy.optimize import brentq

from inls.classify import (
    PredictedFate,
    SymmetryRoute,
    Theorem,
    below_bounds,
    chirped_profile,
    chirped_scan,
    classify_above,
    classify_at,
    classify_below,
    classify_data,
    ground_state_distance,
    level_profile,
    runtime_criteria,
    symmetry_route,
)
from inls.errors import NotAtThreshold
from inls.evolve import Fate, FateKind, Trajectory
from inls.functionals import diagnostics
from inls.grid import Field, Grid, GridKind, Symmetry, radius
from inls.model import ModelParams, sigma_weighted


def _scaled(gs, c: float, theta: float = 0.0) -> Field:
    return gs.q.with_values(c * np.exp(1j * theta) * gs.q.values)


def test_level_profile_peaks_at_one(params_3d):
    lams = np.linspace(0.2, 2.0, 181)
    values = [level_profile(params_3d, lam) for lam in lams]

    assert level_profile(params_3d, 1.0) == pytest.approx(1.0)
    assert max(values) == pytest.approx(1.0, abs=1e-12)


def test_below_threshold_small_multiple_is_global(gs_3d):
    """0.9·Q sits below every level of Q."""
    verdict = classify_below(_scaled(gs_3d, 0.9), gs_3d)

    assert verdict.theorem == Theorem.BELOW_GLOBAL
    assert verdict.predicted_fate == PredictedFate.GLOBAL_SCATTER
    assert verdict.margins["ener-below"].holds
    assert verdict.margins["grad-glob-below"].holds
    assert verdict.ratios.energy < 1.0 and verdict.ratios.gradient < 1.0
    assert set(verdict.margins) == {"ener-below", "grad-glob-below", "grad-blow-below"}


def test_below_threshold_large_multiple_blows_up(gs_3d):
    """1.1·Q: energy level still below Q's, gradient level above."""
    verdict = classify_below(_scaled(gs_3d, 1.1), gs_3d)

    assert verdict.theorem == Theorem.BELOW_BLOWUP
    assert verdict.symmetry_route == SymmetryRoute.RADIAL
    assert verdict.predicted_fate == PredictedFate.BLOWUP
    assert verdict.bounds.gradient_floor > gs_3d.thresholds.grad_m_sigma
    assert verdict.bounds.delta > 0.0


def test_ground_state_itself_is_not_below(gs_3d):
    verdict = classify_below(gs_3d.q, gs_3d)

    assert verdict.theorem == Theorem.UNCLASSIFIED
    assert not verdict.margins["ener-below"].holds


@pytest.mark.parametrize("theta", [0.0, 0.7, math.pi])
def test_phase_rotated_ground_state_is_a_soliton(gs_3d, theta):
    verdict = classify_data(_scaled(gs_3d, 1.0, theta), gs_3d)

    assert verdict.theorem == Theorem.AT_THRESHOLD_2
    assert verdict.predicted_fate == PredictedFate.SOLITON
    assert ground_state_distance(_scaled(gs_3d, 1.0, theta), gs_3d) < 1e-6


def _threshold_gaussian(gs, branch: str) -> Field:
    """Gaussian amplitude tuned so that E·M^σc equals Q's level."""
    grid = gs.q.grid
    shape = np.exp(-radius(grid) ** 2 / 2.0)
    rec = diagnostics(Field(grid=grid, values=shape), gs.params)
    p = gs.params

    def ratio(a: float) -> float:
        e = a**2 * rec.grad_sq / 2.0 - a ** (p.alpha + 2.0) * rec.potential / (p.alpha + 2.0)
        return sigma_weighted(e, a**2 * rec.mass, p.sigma_c) / gs.thresholds.e_m_sigma - 1.0

    sigma = p.sigma_c
    peak = math.sqrt(
        rec.grad_sq * (2.0 + 2.0 * sigma) * (p.alpha + 2.0)
        / (2.0 * rec.potential * (p.alpha + 2.0 + 2.0 * sigma))
    ) ** (2.0 / p.alpha)
    assert ratio(peak) > 0.0
    if branch == "low":
        a = brentq(ratio, 1e-3 * peak, peak, xtol=1e-15)
    else:
        hi = 2.0 * peak
        while ratio(hi) > 0.0:
            hi *= 2.0
        a = brentq(ratio, peak, hi, xtol=1e-15)
    return Field(grid=grid, values=a * shape)


def test_threshold_gaussians_split_by_gradient(gs_3d):
    low = classify_at(_threshold_gaussian(gs_3d, "low"), gs_3d)
    high = classify_at(_threshold_gaussian(gs_3d, "high"), gs_3d)

    assert low.theorem == Theorem.AT_THRESHOLD_1
    assert low.predicted_fate == PredictedFate.GLOBAL
    assert high.theorem == Theorem.AT_THRESHOLD_3
    assert high.predicted_fate == PredictedFate.BLOWUP
    assert set(low.margins) == {"ener-at", "grad-at-1", "grad-at-2", "grad-at-3"}
    assert low.margins["grad-at-1"].holds and high.margins["grad-at-3"].holds


def test_off_threshold_data_is_refused(gs_3d):
    with pytest.raises(NotAtThreshold):
        classify_at(_scaled(gs_3d, 0.9), gs_3d)


def test_below_bounds_roots(gs_3d):
    bounds = below_bounds(diagnostics(_scaled(gs_3d, 0.9), gs_3d.params), gs_3d)
    target = 1.0 - bounds.theta

    assert bounds.lambda1 < 1.0 < bounds.lambda2
    assert level_profile(gs_3d.params, bounds.lambda1) == pytest.approx(target, abs=1e-10)
    assert level_profile(gs_3d.params, bounds.lambda2) == pytest.approx(target, abs=1e-10)
    assert 0.0 < bounds.nu <= 1.0


# --- Above threshold ---

ABOVE_MARGINS = {
    "ener-above-1",
    "ener-above-1-equi",
    "ener-above-2",
    "ener-above-2-equi",
    "gwp-above-1",
    "gwp-above-1-equi",
    "gwp-above-2",
    "gwp-above-2-equi",
    "blow-above-1",
    "blow-above-2",
}



def test_outgoing_chirp_scatters(gs_3d):
    """0.95·Q pushed outward: above the energy level, potential below, V'(0) > 0."""
    result = classify_above(chirped_profile(gs_3d, 0.95, 0.5), gs_3d)

    assert result.verdict.theorem == Theorem.ABOVE_SCATTER
    assert result.verdict.predicted_fate == PredictedFate.GLOBAL_SCATTER
    assert result.report.consistent
    assert result.report.v0_d1 == pytest.approx(8.0 * 0.5 * result.report.v0, rel=1e-5)
    assert set(result.verdict.margins) == ABOVE_MARGINS
    for key in ("ener-above-1", "ener-above-2", "gwp-above-1", "gwp-above-2", "gwp-above-2-equi"):
        assert result.verdict.margins[key].holds


def test_incoming_chirp_blows_up(gs_3d):
    result = classify_above(chirped_profile(gs_3d, 1.05, -0.5), gs_3d)

    assert result.verdict.theorem == Theorem.ABOVE_BLOWUP
    assert result.verdict.predicted_fate == PredictedFate.BLOWUP
    assert result.report.lambda0 > 0.0
    assert result.report.cond_sign < 0.0
    assert result.verdict.margins["blow-above-1"].holds
    assert result.verdict.margins["blow-above-2"].holds


def test_direct_and_lambda0_forms_agree(gs_3d):
    """The direct conditions and their λ0 rewrites never disagree in sign."""
    points = chirped_scan(gs_3d, [0.8, 0.95, 1.05, 1.2], [-0.5, -0.1, 0.1, 0.5])

    assert len(points) == 16
    assert all(p.report.consistent for p in points)
    for p in points:
        verdict = classify_above(chirped_profile(gs_3d, p.c, p.lam), gs_3d).verdict
        assert verdict.theorem == p.theorem


def test_unchirped_energy_level_peaks_at_ground_state(gs_3d):
    """Without chirp E·M^σc of cQ peaks at c = 1."""
    points = chirped_scan(gs_3d, [0.9, 1.0, 1.1], [0.0])
    ratios = {p.c: p.ratio_energy for p in points}

    assert ratios[1.0] == pytest.approx(1.0, abs=1e-9)
    assert ratios[0.9] < 1.0 and ratios[1.1] < 1.0


# --- Routes and runtime criteria ---


def test_symmetry_routes():
    grid = Grid(kind=GridKind.CARTESIAN, n=3, dims=(16, 16, 16), extent=(4.0,) * 3)
    radial = Field(grid=grid, values=np.exp(-radius(grid) ** 2), symmetry=Symmetry.RADIAL)
    plain = Field(grid=grid, values=np.exp(-radius(grid) ** 2))

    assert symmetry_route(radial, ModelParams(n=3, b=0.5, alpha=2.0), True) == SymmetryRoute.RADIAL
    assert symmetry_route(plain, ModelParams(n=3, b=0.5, alpha=2.0), True) == SymmetryRoute.FINITE_VARIANCE
    assert symmetry_route(plain, ModelParams(n=3, b=0.5, alpha=2.0), False) == SymmetryRoute.NONE


def test_runtime_criteria_on_a_single_sample(gs_3d):
    u = _scaled(gs_3d, 0.9)
    rec = diagnostics(u, gs_3d.params)
    traj = Trajectory(
        records=[rec], fate=Fate(kind=FateKind.RAN_TO_END), final_field=u, steps=0, dt_final=1e-3
    )

    crit = runtime_criteria(traj, gs_3d)

    assert crit.scatter_certified
    assert not crit.blowup_certified
    assert crit.blow_margin_max == pytest.approx(rec.virial_g)
    assert crit.delta == pytest.approx(-rec.virial_g)
    assert crit.ground_distance_min is None
