import math
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from inls.errors import (
    AboveThreshold,
    ConditionsInconsistent,
    NotAtThreshold,
    VarianceUnreliable,
)
from inls.evolve import Trajectory
from inls.functionals import DiagnosticRecord, diagnostics, h1_phase_distance
from inls.grid import Field as GridField
from inls.grid import Symmetry, radius, resample_radial
from inls.groundstate import GroundState, coercivity_margin
from inls.model import ModelParams, sigma_weighted

logger = structlog.get_logger()

THRESHOLD_BAND = 1e-6
CONSISTENCY_TOL = 1e-4


class Theorem(str, Enum):
    SCATTER_CRITERION = "ScatterCriterion"
    BLOWUP_CRITERION = "BlowupCriterion"
    BELOW_GLOBAL = "BelowGlobal"
    BELOW_BLOWUP = "BelowBlowup"
    AT_THRESHOLD_1 = "AtThreshold1"
    AT_THRESHOLD_2 = "AtThreshold2"
    AT_THRESHOLD_3 = "AtThreshold3"
    ABOVE_SCATTER = "AboveScatter"
    ABOVE_BLOWUP = "AboveBlowup"
    UNCLASSIFIED = "Unclassified"


class PredictedFate(str, Enum):
    GLOBAL = "Global"
    GLOBAL_SCATTER = "GlobalScatter"
    BLOWUP = "Blowup"
    BLOWUP_OR_GROWUP = "BlowupOrGrowup"
    SOLITON = "Soliton"
    UNKNOWN = "Unknown"


class SymmetryRoute(str, Enum):
    FINITE_VARIANCE = "FiniteVariance"
    RADIAL = "Radial"
    CYLINDRICAL = "CylindricalΣN"
    NONE = "None"


class Margin(BaseModel):
    """One evaluated inequality. slack > 0 means it holds with room to spare."""

    model_config = ConfigDict(frozen=True)

    value: float
    threshold: float
    slack: float = Field(..., description="Signed, normalized distance to the threshold")
    holds: bool


class ThresholdRatios(BaseModel):
    """Scale-invariant levels of the datum relative to those of Q."""

    model_config = ConfigDict(frozen=True)

    energy: float = Field(..., description="E·M^σc / E(Q)M(Q)^σc")
    gradient: float = Field(..., description="‖∇u‖‖u‖^σc / ‖∇Q‖‖Q‖^σc")
    potential: float = Field(..., description="P·M^σc / P(Q)M(Q)^σc")


class BelowBounds(BaseModel):
    """Quantitative consequences of E·M^σc = (1-ϑ)·E(Q)M(Q)^σc."""

    model_config = ConfigDict(frozen=True)

    theta: float
    lambda1: Optional[float] = Field(None, description="Root of F below 1 (global side)")
    lambda2: float = Field(..., description="Root of F above 1 (blow-up side)")
    gradient_ceiling: Optional[float] = None
    potential_ceiling: Optional[float] = None
    nu: Optional[float] = Field(None, description="Coercivity constant at the potential ceiling")
    gradient_floor: Optional[float] = None
    delta: Optional[float] = Field(None, description="Uniform bound G(u(t)) <= -delta")


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    theorem: Theorem
    predicted_fate: PredictedFate
    symmetry_route: SymmetryRoute
    margins: dict[str, Margin] = Field(default_factory=dict)
    ratios: Optional[ThresholdRatios] = None
    bounds: Optional[BelowBounds] = None
    notes: list[str] = Field(default_factory=list)


class AboveThresholdReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda0: float
    v0: float
    v0_d1: float
    v0_d2: float
    z0: float = Field(..., description="√V(0)")
    z0_d1: float = Field(..., description="V'(0)/(2√V(0))")
    cond_energy: float = Field(..., description="Slack of the virial-corrected energy bound")
    cond_p: float = Field(..., description="Slack of the potential comparison of the chosen branch")
    cond_sign: float = Field(..., description="Normalized V'(0)")
    consistent: bool = True


class AboveResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    verdict: Verdict
    report: AboveThresholdReport


class RuntimeCriteria(BaseModel):
    model_config = ConfigDict(frozen=True)

    scat_margin_min: float = Field(..., description="min_t P(Q)M(Q)^σc - P(u)M(u)^σc")
    blow_margin_max: float = Field(..., description="max_t G(u(t))")
    scatter_certified: bool
    blowup_certified: bool
    delta: float
    ground_distance_min: Optional[float] = None


class ChirpPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float
    lam: float
    theorem: Theorem
    ratio_energy: float
    report: AboveThresholdReport


# --- Helpers ---


def _below(value: float, threshold: float, band: float = 0.0) -> Margin:
    slack = (threshold - value) / abs(threshold)
    return Margin(value=value, threshold=threshold, slack=slack, holds=slack > band)


def _above(value: float, threshold: float, band: float = 0.0) -> Margin:
    slack = (value - threshold) / abs(threshold)
    return Margin(value=value, threshold=threshold, slack=slack, holds=slack > band)


def _at(value: float, threshold: float, tol: float) -> Margin:
    slack = tol - abs(value - threshold) / abs(threshold)
    return Margin(value=value, threshold=threshold, slack=slack, holds=slack >= 0.0)


def _levels(rec: DiagnosticRecord, params: ModelParams) -> tuple[float, float, float]:
    sigma = params.sigma_c
    e_m = sigma_weighted(rec.energy, rec.mass, sigma)
    grad_m = math.sqrt(rec.grad_sq) * math.sqrt(sigma_weighted(1.0, rec.mass, sigma))
    p_m = sigma_weighted(rec.potential, rec.mass, sigma)
    return e_m, grad_m, p_m


def _ratios(rec: DiagnosticRecord, gs: GroundState) -> ThresholdRatios:
    e_m, grad_m, p_m = _levels(rec, gs.params)
    th = gs.thresholds
    return ThresholdRatios(
        energy=e_m / th.e_m_sigma,
        gradient=grad_m / th.grad_m_sigma,
        potential=p_m / th.p_m_sigma,
    )


def symmetry_route(u0: GridField, params: ModelParams, variance_reliable: bool) -> SymmetryRoute:
    """Strongest route that upgrades blow-up-or-grow-up to finite-time blow-up."""
    if u0.symmetry == Symmetry.RADIAL and params.n >= 2 and params.alpha <= 4.0:
        return SymmetryRoute.RADIAL
    if u0.symmetry in (Symmetry.RADIAL, Symmetry.CYLINDRICAL) and params.n >= 3 and params.alpha <= 2.0:
        return SymmetryRoute.CYLINDRICAL
    if variance_reliable:
        return SymmetryRoute.FINITE_VARIANCE
    return SymmetryRoute.NONE


def _blowup_fate(route: SymmetryRoute) -> PredictedFate:
    return PredictedFate.BLOWUP if route != SymmetryRoute.NONE else PredictedFate.BLOWUP_OR_GROWUP


def _global_fate(params: ModelParams) -> PredictedFate:
    return PredictedFate.GLOBAL_SCATTER if params.scattering_regime else PredictedFate.GLOBAL


def _log_verdict(op: str, verdict: Verdict) -> Verdict:
    logger.info(
        "classify.verdict",
        op=op,
        theorem=verdict.theorem.value,
        predicted_fate=verdict.predicted_fate.value,
        route=verdict.symmetry_route.value,
    )
    return verdict


# --- Below threshold ---


def level_profile(params: ModelParams, lam: float) -> float:
    """F(λ) = (Nα+2b)/(Nα-4+2b)·λ² - 4/(Nα-4+2b)·λ^{(Nα+2b)/2}; F(1) = 1 is its maximum."""
    k, g = params.scaling_weight, params.energy_gap
    return k / g * lam**2 - 4.0 / g * lam ** (k / 2.0)


def below_bounds(rec: DiagnosticRecord, gs: GroundState) -> BelowBounds:
    """
    Roots λ1 < 1 < λ2 of F(λ) = 1 - ϑ and the bounds they imply.

    On the global side the gradient level stays under λ1 and the potential
    level under λ1^{(Nα+2b)/2} of Q's; on the blow-up side the gradient level
    stays above λ2 and G(u(t)) <= -δ.
    """
    params = gs.params
    ratios = _ratios(rec, gs)
    theta = 1.0 - ratios.energy
    target = 1.0 - theta

    def f(lam: float) -> float:
        return level_profile(params, lam) - target

    hi = 2.0
    while f(hi) > 0.0:
        hi *= 2.0
    lambda2 = brentq(f, 1.0, hi, xtol=1e-14)
    th = gs.thresholds
    k = params.scaling_weight
    delta = (
        params.energy_gap
        / 4.0
        * theta
        * gs.grad_sq_q
        * sigma_weighted(1.0, gs.mass_q / rec.mass, params.sigma_c)
    )

    lambda1 = gradient_ceiling = potential_ceiling = nu = None
    if 0.0 < target < 1.0:
        lambda1 = brentq(f, 0.0, 1.0, xtol=1e-14)
        gradient_ceiling = lambda1 * th.grad_m_sigma
        potential_ceiling = lambda1 ** (k / 2.0) * th.p_m_sigma
        try:
            nu = coercivity_margin(gs, potential_ceiling).nu
        except AboveThreshold:
            nu = None

    return BelowBounds(
        theta=theta,
        lambda1=lambda1,
        lambda2=lambda2,
        gradient_ceiling=gradient_ceiling,
        potential_ceiling=potential_ceiling,
        nu=nu,
        gradient_floor=lambda2 * th.grad_m_sigma,
        delta=delta,
    )


def classify_below(u0: GridField, gs: GroundState, band: float = THRESHOLD_BAND) -> Verdict:
    """
    Below-threshold dichotomy: E·M^σc under Q's level, then the gradient
    level decides between global existence and blow-up.
    """
    params = gs.params
    rec = diagnostics(u0, params)
    e_m, grad_m, _ = _levels(rec, params)
    th = gs.thresholds
    route = symmetry_route(u0, params, rec.variance_reliable)
    margins = {"ener-below": _below(e_m, th.e_m_sigma, band)}
    ratios = _ratios(rec, gs)

    if not margins["ener-below"].holds:
        return _log_verdict(
            "below",
            Verdict(
                theorem=Theorem.UNCLASSIFIED,
                predicted_fate=PredictedFate.UNKNOWN,
                symmetry_route=route,
                margins=margins,
                ratios=ratios,
                notes=["energy level not below the ground-state level"],
            ),
        )

    margins["grad-glob-below"] = _below(grad_m, th.grad_m_sigma)
    margins["grad-blow-below"] = _above(grad_m, th.grad_m_sigma)
    bounds = below_bounds(rec, gs)

    if margins["grad-glob-below"].holds:
        theorem, fate = Theorem.BELOW_GLOBAL, _global_fate(params)
    elif margins["grad-blow-below"].holds:
        theorem, fate = Theorem.BELOW_BLOWUP, _blowup_fate(route)
    else:
        theorem, fate = Theorem.UNCLASSIFIED, PredictedFate.UNKNOWN

    return _log_verdict(
        "below",
        Verdict(
            theorem=theorem,
            predicted_fate=fate,
            symmetry_route=route,
            margins=margins,
            ratios=ratios,
            bounds=bounds,
        ),
    )


# --- At threshold ---


def classify_at(u0: GridField, gs: GroundState, tol: float = THRESHOLD_BAND) -> Verdict:
    """
    Threshold trichotomy by the gradient level.

    Raises:
        NotAtThreshold: E·M^σc is not within tol of Q's level.
    """
    params = gs.params
    rec = diagnostics(u0, params)
    e_m, grad_m, _ = _levels(rec, params)
    th = gs.thresholds
    margins = {"ener-at": _at(e_m, th.e_m_sigma, tol)}
    if not margins["ener-at"].holds:
        raise NotAtThreshold(
            f"energy level ratio {e_m / th.e_m_sigma:.9g} is outside 1 ± {tol:g}"
        )
    route = symmetry_route(u0, params, rec.variance_reliable)
    margins["grad-at-2"] = _at(grad_m, th.grad_m_sigma, tol)
    margins["grad-at-1"] = _below(grad_m, th.grad_m_sigma, tol)
    margins["grad-at-3"] = _above(grad_m, th.grad_m_sigma, tol)
    notes: list[str] = []

    if margins["grad-at-2"].holds:
        theorem, fate = Theorem.AT_THRESHOLD_2, PredictedFate.SOLITON
        notes.append("u(t) = e^{it}e^{iθ}Q up to the symmetries")
    elif margins["grad-at-1"].holds:
        theorem, fate = Theorem.AT_THRESHOLD_1, PredictedFate.GLOBAL
        notes.append("either the below-threshold bounds persist or u(t_n) approaches Q in H¹")
    else:
        theorem, fate = Theorem.AT_THRESHOLD_3, _blowup_fate(route)

    return _log_verdict(
        "at",
        Verdict(
            theorem=theorem,
            predicted_fate=fate,
            symmetry_route=route,
            margins=margins,
            ratios=_ratios(rec, gs),
            notes=notes,
        ),
    )


# --- Above threshold ---


def _above_threshold(
    u0: GridField, gs: GroundState, band: float, strict: bool
) -> AboveResult:
    params = gs.params
    rec = diagnostics(u0, params)
    if not rec.variance_reliable:
        raise VarianceUnreliable("above-threshold criteria need a reliable variance")

    e_m, _, p_m = _levels(rec, params)
    th = gs.thresholds
    m_inv_sigma = sigma_weighted(1.0, rec.mass, -params.sigma_c)
    e_level = th.e_m_sigma * m_inv_sigma  # E at which E·M^σc meets Q's level
    v, v1, v2 = rec.variance, rec.variance_d1, rec.variance_d2
    ratio_e = e_m / th.e_m_sigma
    lambda0 = 16.0 * (rec.energy - e_level)
    z0 = math.sqrt(v)
    z0_d1 = v1 / (2.0 * z0) if z0 > 0.0 else 0.0
    sign_scale = 4.0 * math.sqrt(v * rec.grad_sq) or 1.0

    margins: dict[str, Margin] = {}
    margins["ener-above-1"] = _above(e_m, th.e_m_sigma, -band)
    margins["ener-above-1-equi"] = Margin(
        value=lambda0, threshold=0.0, slack=lambda0 / (16.0 * e_level), holds=lambda0 >= -16.0 * e_level * band,
    )
    virial_energy = ratio_e * (1.0 - v1**2 / (32.0 * rec.energy * v)) if rec.energy and v else math.nan
    margins["ener-above-2"] = _below(virial_energy, 1.0, -band)
    speed_scale = 32.0 * v * e_level
    margins["ener-above-2-equi"] = Margin(
        value=v1**2,
        threshold=2.0 * v * lambda0,
        slack=(v1**2 - 2.0 * v * lambda0) / speed_scale,
        holds=v1**2 - 2.0 * v * lambda0 >= -speed_scale * band,
    )
    margins["gwp-above-1"] = _below(p_m, th.p_m_sigma)
    margins["blow-above-1"] = _above(p_m, th.p_m_sigma)
    accel_scale = 16.0 * e_level
    margins["gwp-above-1-equi"] = Margin(
        value=v2, threshold=lambda0, slack=(v2 - lambda0) / accel_scale, holds=v2 > lambda0
    )
    margins["gwp-above-2"] = Margin(value=v1, threshold=0.0, slack=v1 / sign_scale, holds=v1 >= 0.0)
    margins["gwp-above-2-equi"] = Margin(
        value=z0_d1, threshold=0.0, slack=2.0 * z0 * z0_d1 / sign_scale, holds=z0_d1 >= 0.0
    )
    margins["blow-above-2"] = Margin(value=v1, threshold=0.0, slack=-v1 / sign_scale, holds=v1 <= 0.0)

    # Direct forms against their λ0 equivalents
    pairs = (
        ("ener-above-2", "ener-above-2-equi"),
        ("gwp-above-1", "gwp-above-1-equi"),
        ("gwp-above-2", "gwp-above-2-equi"),
        ("ener-above-1", "ener-above-1-equi"),
    )
    disagreements = [
        (a, b)
        for a, b in pairs
        if math.copysign(1.0, margins[a].slack) != math.copysign(1.0, margins[b].slack)
        and abs(margins[a].slack) > CONSISTENCY_TOL
        and abs(margins[b].slack) > CONSISTENCY_TOL
    ]
    if disagreements:
        logger.warning("classify.above.inconsistent", pairs=disagreements)
        if strict:
            raise ConditionsInconsistent(
                f"direct and lambda0 forms disagree: {', '.join(f'{a}/{b}' for a, b in disagreements)}"
            )

    route = symmetry_route(u0, params, True)
    if not (margins["ener-above-1"].holds and margins["ener-above-2"].holds):
        theorem, fate = Theorem.UNCLASSIFIED, PredictedFate.UNKNOWN
        cond_p = margins["gwp-above-1"].slack
    elif margins["gwp-above-1"].holds and margins["gwp-above-2"].holds:
        theorem, fate = Theorem.ABOVE_SCATTER, _global_fate(params)
        cond_p = margins["gwp-above-1"].slack
    elif margins["blow-above-1"].holds and margins["blow-above-2"].holds:
        theorem, fate = Theorem.ABOVE_BLOWUP, PredictedFate.BLOWUP
        cond_p = margins["blow-above-1"].slack
    else:
        theorem, fate = Theorem.UNCLASSIFIED, PredictedFate.UNKNOWN
        cond_p = margins["gwp-above-1"].slack

    report = AboveThresholdReport(
        lambda0=lambda0,
        v0=v,
        v0_d1=v1,
        v0_d2=v2,
        z0=z0,
        z0_d1=z0_d1,
        cond_energy=margins["ener-above-2"].slack,
        cond_p=cond_p,
        cond_sign=v1 / sign_scale,
        consistent=not disagreements,
    )
    verdict = Verdict(
        theorem=theorem,
        predicted_fate=fate,
        symmetry_route=route,
        margins=margins,
        ratios=_ratios(rec, gs),
    )
    return AboveResult(verdict=verdict, report=report)


def classify_above(u0: GridField, gs: GroundState, band: float = THRESHOLD_BAND) -> AboveResult:
    """
    Above-threshold dichotomy for finite-variance data.

    Raises:
        VarianceUnreliable: V(0) or V'(0) cannot be computed on u0's grid.
        ConditionsInconsistent: a direct condition and its λ0 form disagree in sign.
    """
    result = _above_threshold(u0, gs, band, strict=True)
    _log_verdict("above", result.verdict)
    return result


def classify_data(u0: GridField, gs: GroundState, band: float = THRESHOLD_BAND) -> Verdict:
    """Routes u0 to the at, below or above classifier by its energy level."""
    rec = diagnostics(u0, gs.params)
    ratio = _ratios(rec, gs).energy
    if abs(ratio - 1.0) <= band:
        return classify_at(u0, gs, band)
    if ratio < 1.0:
        return classify_below(u0, gs, band)
    try:
        return classify_above(u0, gs, band).verdict
    except VarianceUnreliable:
        return _log_verdict(
            "data",
            Verdict(
                theorem=Theorem.UNCLASSIFIED,
                predicted_fate=PredictedFate.UNKNOWN,
                symmetry_route=symmetry_route(u0, gs.params, False),
                ratios=_ratios(rec, gs),
                notes=["above the ground-state level without a finite variance"],
            ),
        )


# --- Runtime criteria ---


def ground_state_distance(u: GridField, gs: GroundState) -> float:
    """min over θ of ‖u - e^{iθ}Q‖_{H¹}, with Q transferred onto u's grid."""
    q = gs.q if gs.q.grid == u.grid else resample_radial(gs.q, u.grid)
    return h1_phase_distance(u, q)


def runtime_criteria(traj: Trajectory, gs: GroundState) -> RuntimeCriteria:
    """Window versions of the scattering and blow-up criteria along a trajectory."""
    params = gs.params
    th = gs.thresholds
    scat = [th.p_m_sigma - sigma_weighted(r.potential, r.mass, params.sigma_c) for r in traj.records]
    blow = [r.virial_g for r in traj.records]
    scat_min, blow_max = min(scat), max(blow)
    distances = [s.h1_distance for s in traj.reference]
    return RuntimeCriteria(
        scat_margin_min=scat_min,
        blow_margin_max=blow_max,
        scatter_certified=scat_min > 0.0,
        blowup_certified=blow_max < 0.0,
        delta=-blow_max,
        ground_distance_min=min(distances) if distances else None,
    )


# --- Chirped profiles ---


def chirped_profile(gs: GroundState, c: float, lam: float) -> GridField:
    """e^{iλ|x|²}·c·Q; V'(0) = 8λ·V(0)."""
    q = gs.q
    return q.with_values(c * q.values * np.exp(1j * lam * radius(q.grid) ** 2))


def chirped_scan(
    gs: GroundState, cs: Sequence[float], lambdas: Sequence[float]
) -> list[ChirpPoint]:
    """Above-threshold conditions over a (c, λ) grid of chirped ground-state profiles."""
    points = []
    for c in cs:
        for lam in lambdas:
            u0 = chirped_profile(gs, c, lam)
            result = _above_threshold(u0, gs, THRESHOLD_BAND, strict=False)
            points.append(
                ChirpPoint(
                    c=c,
                    lam=lam,
                    theorem=result.verdict.theorem,
                    ratio_energy=result.verdict.ratios.energy if result.verdict.ratios else math.nan,
                    report=result.report,
                )
            )
    inconsistent = sum(not p.report.consistent for p in points)
    logger.info("classify.chirp_scan.done", points=len(points), inconsistent=inconsistent)
    return points
