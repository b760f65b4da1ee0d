import math
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import solve_banded

from engine.telemetry.metrics import MetricKey, metrics
from inls.errors import (
    BoundaryContaminated,
    InsufficientSamples,
    OutOfRange,
    StepNotConverged,
    UnsupportedGrid,
)
from inls.functionals import DiagnosticRecord, diagnostics, energy_parts, h1_phase_distance
from inls.grid import Field as GridField
from inls.grid import Grid, GridKind, effective_weight, radial_operators, shell_fraction, wavenumbers
from inls.model import ModelParams

logger = structlog.get_logger()

MIN_VIRIAL_SAMPLES = 5
# Energy drift is measured against max(|E(u0)|, this share of ‖∇u0‖²) so that
# data with E ≈ 0 do not trigger endless refinement.
ENERGY_SCALE_FLOOR = 1e-2
VIRIAL_SCALE_FLOOR = 1e-3
# Implicit radial step: relative sup-norm Newton update that ends the solve, and its cap.
STEP_TOL = 1e-13
STEP_MAX_ITER = 30


class FateKind(str, Enum):
    RAN_TO_END = "RanToEnd"
    BLOWUP_DETECTED = "BlowupDetected"
    DISPERSED = "Dispersed"
    BOUNDARY_CONTAMINATED = "BoundaryContaminated"
    STEP_FLOOR_HIT = "StepFloorHit"


class Fate(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FateKind
    t: Optional[float] = Field(None, description="Time at which the stopping rule fired")
    note: str = ""


class EvolveControls(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(1e-3, gt=0.0)
    t_end: float = Field(1.0, gt=0.0)
    sample_every: int = Field(10, ge=1, description="Diagnostic cadence in steps")
    dt_min: float = Field(1e-6, gt=0.0)
    blowup_grad_factor: float = Field(25.0, gt=1.0)
    scatter_p_floor: float = Field(0.02, gt=0.0, lt=1.0)
    scatter_window: int = Field(20, ge=1, description="Consecutive samples below the P floor")
    boundary_mass_cap: float = Field(1e-8, gt=0.0)
    adaptive: bool = True
    energy_tol: float = Field(1e-9, gt=0.0, description="Single-step relative energy drift")
    nonlinear: bool = Field(True, description="False runs the free flow (weight zeroed)")

    @model_validator(mode="after")
    def _check_steps(self) -> "EvolveControls":
        if not self.dt > self.dt_min:
            raise OutOfRange("dt", f"dt > dt_min violated: dt={self.dt}, dt_min={self.dt_min}")
        return self


class ReferenceSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    modulus_deviation: float = Field(..., description="sup||u| - |ref|| / sup|ref|")
    h1_distance: float = Field(..., description="Phase-optimized H¹ distance to ref")


class FateReport(BaseModel):
    """Contents of fate.json."""

    model_config = ConfigDict(extra="forbid")

    fate: FateKind
    fate_time: Optional[float] = None
    note: str = ""
    t_reached: float
    steps: int
    dt_final: float
    samples: int


class Trajectory(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    records: list[DiagnosticRecord]
    fate: Fate
    final_field: GridField
    steps: int
    dt_final: float
    reference: list[ReferenceSample] = Field(default_factory=list)

    def report(self) -> FateReport:
        return FateReport(
            fate=self.fate.kind,
            fate_time=self.fate.t,
            note=self.fate.note,
            t_reached=self.records[-1].t,
            steps=self.steps,
            dt_final=self.dt_final,
            samples=len(self.records),
        )


# --- Free flow ---


@lru_cache(maxsize=16)
def _fourier_propagator(grid: Grid, tau: float) -> np.ndarray:
    k2 = np.zeros(grid.shape)
    for axis in range(len(grid.dims)):
        shape = [1] * len(grid.dims)
        shape[axis] = grid.dims[axis]
        k2 = k2 + wavenumbers(grid, axis).reshape(shape) ** 2
    return np.exp(-1j * k2 * tau)


@lru_cache(maxsize=16)
def _crank_nicolson(grid: Grid, tau: float) -> tuple[np.ndarray, sp.csr_matrix]:
    """(I - iτ/2·L) in banded form and the explicit half (I + iτ/2·L)."""
    ops = radial_operators(grid)
    eye = sp.identity(grid.dims[0], format="csr", dtype=np.complex128)
    implicit = (eye - 0.5j * tau * ops.lap).tocsr()
    explicit = (eye + 0.5j * tau * ops.lap).tocsr()
    return ops.banded(implicit), explicit


def free_flow(grid: Grid, values: np.ndarray, tau: float) -> np.ndarray:
    """e^{iτΔ} on Cartesian grids, its Crank–Nicolson image on staggered axes."""
    if grid.kind == GridKind.CARTESIAN:
        return sfft.ifftn(_fourier_propagator(grid, tau) * sfft.fftn(values))
    ab, explicit = _crank_nicolson(grid, tau)
    out = solve_banded((2, 2), ab, explicit @ values)
    if grid.kind == GridKind.CYLINDRICAL:
        k = wavenumbers(grid, 1)
        out = sfft.ifft(np.exp(-1j * k**2 * tau) * sfft.fft(out, axis=1), axis=1)
    return out


@lru_cache(maxsize=16)
def _laplacian_banded(grid: Grid) -> np.ndarray:
    ops = radial_operators(grid)
    return ops.banded(ops.lap)


def _power_mean(a: np.ndarray, c: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Φ(a, c) = (c^q - a^q) / (q(c - a)) with q = (α+2)/2, and ∂Φ/∂c.

    Φ is symmetric in (a, c) and equals a^{α/2} on the diagonal.
    """
    q = (alpha + 2.0) / 2.0
    hi = np.maximum(a, c)
    lo = np.minimum(a, c)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (hi - lo) / hi
        ratio = -np.expm1(q * np.log1p(-x)) / (q * x)
        ratio = np.where(x < 1e-12, 1.0 - (q - 1.0) * x / 2.0, ratio)
        phi = np.where(hi > 0.0, hi ** (q - 1.0) * ratio, 0.0)

        mid = 0.5 * (a + c)
        close = np.abs(c - a) <= 1e-6 * hi
        slope = np.where(close, 0.5 * (q - 1.0) * mid ** (q - 2.0), (c ** (q - 1.0) - phi) / (c - a))
        slope = np.where(hi > 0.0, slope, 0.0)
    return phi, slope


def _newton_matrix(
    lap_ab: np.ndarray,
    k: float,
    wphi: np.ndarray,
    wslope: np.ndarray,
    v: np.ndarray,
    s: np.ndarray,
) -> np.ndarray:
    """
    Jacobian of the implicit step in solve_banded layout (l = u = 5) over the
    interleaved unknowns (Re v_0, Im v_0, Re v_1, ...).
    """
    n = v.size
    ab = np.zeros((11, 2 * n))
    for o in range(-2, 3):
        ab[4 + 2 * o, 1::2] += k * lap_ab[2 + o]
        ab[6 + 2 * o, 0::2] -= k * lap_ab[2 + o]
    ab[5, 0::2] += 1.0 + 2.0 * k * wslope * s.imag * v.real
    ab[4, 1::2] += k * (wphi + 2.0 * wslope * s.imag * v.imag)
    ab[6, 0::2] -= k * (wphi + 2.0 * wslope * s.real * v.real)
    ab[5, 1::2] += 1.0 - 2.0 * k * wslope * s.real * v.imag
    return ab


def _conservative_step(u: GridField, dt: float, params: ModelParams, w: GridField) -> GridField:
    """
    Crank–Nicolson in the full equation on a radial grid:

        (v - u)/dt = i[Δ_h(v+u)/2 + w·Φ(|u|², |v|²)(v+u)/2]

    solved by Newton's method on the real and imaginary parts. Mass and the
    discrete energy are invariants of the exact solve, and a discrete ground
    state only turns its phase.
    """
    grid = u.grid
    alpha = params.alpha
    k = 0.5 * dt
    lap = radial_operators(grid).lap
    lap_ab = _laplacian_banded(grid)
    values = np.asarray(u.values, dtype=np.complex128)
    weight = np.asarray(w.values.real, dtype=float)
    a = np.abs(values) ** 2

    # frozen-coefficient solve as the first guess
    ab = (-1j * k) * lap_ab.astype(np.complex128)
    ab[2] += 1.0 - 1j * k * weight * a ** (alpha / 2.0)
    base = values + 1j * k * (lap @ values + weight * a ** (alpha / 2.0) * values)
    v = solve_banded((2, 2), ab, base)

    change = last = math.inf
    for _ in range(STEP_MAX_ITER):
        s = v + values
        phi, slope = _power_mean(a, np.abs(v) ** 2, alpha)
        residual = v - values - 1j * k * (lap @ s + weight * phi * s)
        jac = _newton_matrix(lap_ab, k, weight * phi, weight * slope, v, s)
        rhs = np.empty(2 * v.size)
        rhs[0::2] = -residual.real
        rhs[1::2] = -residual.imag
        delta = solve_banded((5, 5), jac, rhs)
        v = v + (delta[0::2] + 1j * delta[1::2])

        scale = max(float(np.max(np.abs(v))), 1e-300)
        change = float(np.max(np.abs(delta))) / scale
        # a change that stops shrinking near STEP_TOL is roundoff
        if change <= STEP_TOL or (change <= 100.0 * STEP_TOL and change >= last):
            return u.with_values(v)
        last = change
    raise StepNotConverged(dt, STEP_MAX_ITER, change)


def step(u: GridField, dt: float, params: ModelParams, w: GridField) -> GridField:
    """
    One time step; negative dt runs the scheme backwards.

    Radial grids take the conservative Crank–Nicolson step. Cartesian and
    cylindrical grids take a Strang step: free half-step, exact phase
    rotation u·e^{i·dt·w|u|^α}, free half-step.

    Raises:
        StepNotConverged: the implicit radial solve did not settle.
    """
    if w.grid != u.grid:
        raise UnsupportedGrid("weight and field live on different grids")
    grid = u.grid
    if grid.kind == GridKind.RADIAL:
        return _conservative_step(u, dt, params, w)
    values = free_flow(grid, u.values, dt / 2.0)
    values = values * np.exp(1j * dt * w.values.real * np.abs(values) ** params.alpha)
    values = free_flow(grid, values, dt / 2.0)
    return u.with_values(values)


# --- Runs ---


def _record(u: GridField, params: ModelParams, t: float, nonlinear: bool) -> DiagnosticRecord:
    rec = diagnostics(u, params, t=t)
    if nonlinear:
        return rec
    return rec.model_copy(
        update={
            "potential": 0.0,
            "energy": rec.grad_sq / 2.0,
            "virial_g": rec.grad_sq,
            "variance_d2": 8.0 * rec.grad_sq,
            "weight_defect": 0.0,
        }
    )


def _energy(u: GridField, params: ModelParams, nonlinear: bool) -> float:
    _, grad_sq, pot = energy_parts(u, params)
    return grad_sq / 2.0 - (pot / (params.alpha + 2.0) if nonlinear else 0.0)


def _fill_variance_fd(records: list[DiagnosticRecord]) -> list[DiagnosticRecord]:
    """Nonuniform centered second difference of V at interior samples."""
    out = list(records)
    for i in range(1, len(records) - 1):
        a, b, c = records[i - 1], records[i], records[i + 1]
        if not (a.variance_reliable and b.variance_reliable and c.variance_reliable):
            continue
        h1, h2 = b.t - a.t, c.t - b.t
        fd = 2.0 * ((c.variance - b.variance) / h2 - (b.variance - a.variance) / h1) / (h1 + h2)
        out[i] = b.model_copy(update={"variance_d2_fd": fd})
    return out


def run(
    u0: GridField,
    params: ModelParams,
    controls: EvolveControls,
    reference: Optional[GridField] = None,
) -> Trajectory:
    """
    Integrates from t = 0 to t_end, sampling diagnostics every `sample_every`
    accepted steps.

    The first stopping rule to fire sets the fate; without one the run ends
    as RanToEnd. When `reference` is given, each sample also records the
    modulus deviation and the phase-optimized H¹ distance to it. A step that
    drifts in energy (when adaptive) or whose implicit solve does not settle
    is retried at half the dt, down to dt_min.

    Raises:
        BoundaryContaminated: u0 already carries too much mass in the outer shell.
    """
    grid = u0.grid
    nonlinear = controls.nonlinear
    w = effective_weight(grid, params.b) if nonlinear else GridField.zeros(grid)
    if shell_fraction(grid, np.abs(u0.values) ** 2) > controls.boundary_mass_cap:
        raise BoundaryContaminated("initial data already reach the outer shell")

    log = logger.bind(grid=grid.kind.value, n=params.n, b=params.b, alpha=params.alpha)
    log.info("evolve.run.start", dt=controls.dt, t_end=controls.t_end)

    rec0 = _record(u0, params, 0.0, nonlinear)
    records = [rec0]
    reference_samples: list[ReferenceSample] = []
    ref_top = float(np.max(np.abs(reference.values))) if reference is not None else 1.0

    def track(u: GridField, t: float) -> None:
        if reference is None:
            return
        dev = float(np.max(np.abs(np.abs(u.values) - np.abs(reference.values)))) / ref_top
        reference_samples.append(
            ReferenceSample(t=t, modulus_deviation=dev, h1_distance=h1_phase_distance(u, reference))
        )

    track(u0, 0.0)

    e_scale = max(abs(rec0.energy), ENERGY_SCALE_FLOOR * rec0.grad_sq, 1e-300)
    e_prev = rec0.energy
    u, t, dt = u0, 0.0, controls.dt
    steps = 0
    low_potential = 0
    fate: Optional[Fate] = None
    t_stop = controls.t_end * (1.0 - 1e-12)

    while t < t_stop:
        h = min(dt, controls.t_end - t)
        rejected: Optional[str] = None
        try:
            candidate = step(u, h, params, w)
        except StepNotConverged as e:
            rejected = e.reason
        else:
            if controls.adaptive:
                e_new = _energy(candidate, params, nonlinear)
                drift = abs(e_new - e_prev) / e_scale
                if drift > controls.energy_tol:
                    rejected = f"energy drift {drift:.2e}"

        if rejected is not None:
            metrics.increment(MetricKey.STEPS_REJECTED)
            if dt <= controls.dt_min:
                fate = Fate(kind=FateKind.STEP_FLOOR_HIT, t=t, note=rejected)
                break
            dt = max(dt / 2.0, controls.dt_min)
            metrics.increment(MetricKey.DT_HALVINGS)
            log.debug("evolve.dt_halved", t=t, dt=dt, cause=rejected)
            continue
        if controls.adaptive:
            e_prev = e_new

        u, t = candidate, t + h
        steps += 1
        metrics.increment(MetricKey.STEPS_TAKEN)
        if steps % controls.sample_every and t < t_stop:
            continue

        rec = _record(u, params, t, nonlinear)
        records.append(rec)
        metrics.increment(MetricKey.SAMPLES)
        track(u, t)

        # 1. Gradient growth
        if rec.grad_sq >= controls.blowup_grad_factor * rec0.grad_sq:
            fate = Fate(kind=FateKind.BLOWUP_DETECTED, t=t)
            break
        # 2. Sustained loss of potential energy
        if rec0.potential > 0.0 and rec.potential / rec0.potential <= controls.scatter_p_floor:
            low_potential += 1
        else:
            low_potential = 0
        if low_potential >= controls.scatter_window:
            fate = Fate(
                kind=FateKind.DISPERSED,
                t=t,
                note="heuristic: sustained decay of P(u), not a proof of scattering",
            )
            break
        # 3. Boundary mass
        if shell_fraction(grid, np.abs(u.values) ** 2) > controls.boundary_mass_cap:
            fate = Fate(kind=FateKind.BOUNDARY_CONTAMINATED, t=t)
            break

    if fate is None:
        fate = Fate(kind=FateKind.RAN_TO_END, t=None)

    log.info("evolve.run.finished", fate=fate.kind.value, t=t, steps=steps, dt=dt)
    return Trajectory(
        records=_fill_variance_fd(records),
        fate=fate,
        final_field=u,
        steps=steps,
        dt_final=dt,
        reference=reference_samples,
    )


def virial_consistency(traj: Trajectory) -> float:
    """
    Max relative gap between the FD second derivative of V and its closed form
    (8‖∇u‖² - 4(Nα+2b)/(α+2)·P plus the regularization defect).

    Raises:
        InsufficientSamples: fewer than five reliable variance samples.
    """
    reliable = [r for r in traj.records if r.variance_reliable]
    interior = [r for r in reliable if not math.isnan(r.variance_d2_fd)]
    if len(reliable) < MIN_VIRIAL_SAMPLES or not interior:
        raise InsufficientSamples(
            f"{len(reliable)} reliable variance samples, need {MIN_VIRIAL_SAMPLES}"
        )
    floor = VIRIAL_SCALE_FLOOR * 8.0 * max(r.grad_sq for r in reliable)
    worst = 0.0
    for r in interior:
        exact = r.variance_d2 + r.weight_defect
        worst = max(worst, abs(r.variance_d2_fd - exact) / max(abs(exact), floor))
    return worst


class Drifts(BaseModel):
    model_config = ConfigDict(frozen=True)

    mass: float = Field(..., description="max_t |M(t) - M(0)| / M(0)")
    energy: float = Field(..., description="max_t |E(t) - E(0)| / |E(0)|")


def conservation_drifts(records: list[DiagnosticRecord]) -> Drifts:
    m0, e0 = records[0].mass, records[0].energy
    mass = max(abs(r.mass - m0) for r in records) / m0 if m0 else 0.0
    energy = max(abs(r.energy - e0) for r in records) / abs(e0) if e0 else 0.0
    return Drifts(mass=mass, energy=energy)
