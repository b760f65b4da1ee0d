import math
from typing import Optional

import numpy as np
import scipy.sparse as sp
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import solve_banded

from engine.telemetry.metrics import MetricKey, metrics
from inls.errors import (
    AboveThreshold,
    GridTooSmall,
    NoConvergence,
    NonPositive,
    OutOfRange,
    UnsupportedGrid,
)
from inls.functionals import energy_parts, weinstein_quotient
from inls.grid import Field as GridField
from inls.grid import (
    Grid,
    GridKind,
    axis_coordinates,
    quadrature_weights,
    radial_operators,
    weight_arrays,
)
from inls.model import ModelParams, sigma_weighted

logger = structlog.get_logger()

# Iterates may dip this far below zero (relative to their max) in the far
# tail before they count as having lost positivity.
NEGATIVE_SLACK = 1e-8
RESTART_WIDTHS = (1.0, 2.0, 4.0, 8.0)


class SolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iter: int = Field(5000, ge=1)
    tol: float = Field(1e-10, gt=0.0, description="Bound on the relative iterate change")
    residual_tol: float = Field(1e-8, gt=0.0, description="Residual bound relative to sup Q")
    relax: float = Field(1.0, gt=0.0, le=1.0, description="Under-relaxation of each update")
    restarts: int = Field(3, ge=0, le=len(RESTART_WIDTHS) - 1)


class Thresholds(BaseModel):
    """The three scale-invariant levels of Q that the dichotomy compares against."""

    model_config = ConfigDict(frozen=True)

    e_m_sigma: float = Field(..., description="E(Q)·M(Q)^σc")
    grad_m_sigma: float = Field(..., description="‖∇Q‖·‖Q‖^σc")
    p_m_sigma: float = Field(..., description="P(Q)·M(Q)^σc")


class PohozaevResiduals(BaseModel):
    model_config = ConfigDict(frozen=True)

    r1: float
    r2: float


class EnergyRelations(BaseModel):
    model_config = ConfigDict(frozen=True)

    r_grad: float = Field(..., description="E(Q) over its gradient form")
    r_pot: float = Field(..., description="E(Q) over its potential form")
    r_threshold: float = Field(..., description="e_m_sigma over its grad_m_sigma² form")


class SharpConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_opt: float
    c_opt_closed: float
    e_m_sigma: float
    grad_m_sigma: float
    p_m_sigma: float
    energy_relations: EnergyRelations


class Coercivity(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho: float
    nu: float


class GroundState(BaseModel):
    """Converged positive radial solution of -ΔQ + Q - |x|^{-b}Q^{α+1} = 0 and its constants."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ModelParams
    q: GridField
    mass_q: float
    grad_sq_q: float
    potential_q: float
    energy_q: float
    c_opt: float = Field(..., description="Weinstein quotient of Q")
    c_opt_closed: float = Field(..., description="Closed form from the Pohozaev quantities")
    thresholds: Thresholds
    residual: float = Field(..., description="sup |-ΔQ + Q - wQ^{α+1}|")
    iterations: int
    stabilizing_factor: float = Field(..., description="M_n at the last iteration")

    def summary(self, q_file: str = "q.field") -> "GroundStateSummary":
        return GroundStateSummary(
            params=self.params,
            validation_mode=self.params.validation_mode,
            grid=self.q.grid,
            mass_q=self.mass_q,
            grad_sq_q=self.grad_sq_q,
            potential_q=self.potential_q,
            energy_q=self.energy_q,
            c_opt=self.c_opt,
            c_opt_closed=self.c_opt_closed,
            thresholds=self.thresholds,
            residual=self.residual,
            iterations=self.iterations,
            stabilizing_factor=self.stabilizing_factor,
            pohozaev=pohozaev_residuals(self),
            q_file=q_file,
        )


class GroundStateSummary(BaseModel):
    """JSON face of a GroundState; Q itself lives in the binary field file."""

    model_config = ConfigDict(extra="forbid")

    params: ModelParams
    validation_mode: bool = False
    grid: Grid
    mass_q: float
    grad_sq_q: float
    potential_q: float
    energy_q: float
    c_opt: float
    c_opt_closed: float
    thresholds: Thresholds
    residual: float
    iterations: int
    stabilizing_factor: float
    pohozaev: PohozaevResiduals
    q_file: str = "q.field"

    @model_validator(mode="before")
    @classmethod
    def _restore_mode(cls, data: object) -> object:
        # params never serializes validation_mode; the sibling flag restores it
        if isinstance(data, dict) and data.get("validation_mode") and isinstance(data.get("params"), dict):
            data = {**data, "params": {**data["params"], "validation_mode": True}}
        return data

    def attach(self, q: GridField) -> GroundState:
        if q.grid != self.grid:
            raise UnsupportedGrid("stored Q does not live on the summary's grid")
        return GroundState(
            params=self.params,
            q=q,
            mass_q=self.mass_q,
            grad_sq_q=self.grad_sq_q,
            potential_q=self.potential_q,
            energy_q=self.energy_q,
            c_opt=self.c_opt,
            c_opt_closed=self.c_opt_closed,
            thresholds=self.thresholds,
            residual=self.residual,
            iterations=self.iterations,
            stabilizing_factor=self.stabilizing_factor,
        )


# --- Solver ---


def _nonlinear_term(q: np.ndarray, w: np.ndarray, alpha: float) -> np.ndarray:
    return w * np.abs(q) ** alpha * q


def _iterate(
    q: np.ndarray,
    a_mat: sp.csr_matrix,
    ab: np.ndarray,
    w: np.ndarray,
    qw: np.ndarray,
    params: ModelParams,
    opts: SolverOptions,
) -> tuple[np.ndarray, float, int, float]:
    alpha = params.alpha
    gamma_p = (alpha + 1.0) / alpha
    residual = math.inf
    for it in range(1, opts.max_iter + 1):
        nq = _nonlinear_term(q, w, alpha)
        m_n = float(np.sum(qw * q * (a_mat @ q)) / np.sum(qw * q * nq))
        new = m_n**gamma_p * solve_banded((2, 2), ab, nq)
        if opts.relax < 1.0:
            new = (1.0 - opts.relax) * q + opts.relax * new

        top = float(np.max(new))
        if top <= 0.0 or float(np.min(new)) < -NEGATIVE_SLACK * top:
            raise NonPositive(f"iterate lost positivity at iteration {it}")
        delta = float(np.max(np.abs(new - q))) / float(np.max(np.abs(q)))
        q = new
        if delta < opts.tol:
            residual = float(np.max(np.abs(a_mat @ q - _nonlinear_term(q, w, alpha))))
            if residual <= opts.residual_tol * top:
                return q, m_n, it, residual
        elif it % 500 == 0:
            logger.debug("ground.solve.progress", iteration=it, delta=delta, factor=m_n)

    residual = float(np.max(np.abs(a_mat @ q - _nonlinear_term(q, w, alpha))))
    raise NoConvergence(opts.max_iter, residual)


def solve_ground_state(
    params: ModelParams,
    grid: Grid,
    opts: Optional[SolverOptions] = None,
    initial: Optional[GridField] = None,
) -> GroundState:
    """
    Stabilized fixed-point solve for Q on a radial grid.

    Q_{n+1} = M_n^{(α+1)/α}·(1-Δ)^{-1}[wQ_n^{α+1}] with the banded 4th-order
    Laplacian. The converged iterate is rescaled so that M = 1, making it a
    solution rather than a multiple of one. Starting from `initial` (for
    instance a previously converged Q) skips the Gaussian guesses.

    Raises:
        UnsupportedGrid: grid is not radial or its N differs from params.n.
        GridTooSmall: e^{-extent} >= tol.
        NonPositive: every restart lost positivity.
        NoConvergence: max_iter reached.
    """
    opts = opts or SolverOptions()
    if grid.kind != GridKind.RADIAL or grid.n != params.n:
        raise UnsupportedGrid(f"ground state needs a radial grid with N={params.n}")
    if math.exp(-grid.extent[0]) >= opts.tol:
        raise GridTooSmall(f"e^(-{grid.extent[0]}) is not below tol={opts.tol}")

    log = logger.bind(n=params.n, b=params.b, alpha=params.alpha, points=grid.dims[0])
    log.info("ground.solve.start", tol=opts.tol, max_iter=opts.max_iter)

    ops = radial_operators(grid)
    a_mat = (sp.identity(grid.dims[0], format="csr") - ops.lap).tocsr()
    ab = ops.banded(a_mat)
    w, _, _ = weight_arrays(grid, params.b)
    qw = quadrature_weights(grid)
    r = axis_coordinates(grid)[0]

    guesses: list[tuple[str, np.ndarray]] = []
    if initial is not None:
        if initial.grid != grid:
            raise UnsupportedGrid("initial guess lives on a different grid")
        guesses.append(("initial", np.abs(initial.values)))
    guesses += [
        (f"gaussian({width})", np.exp(-((r / width) ** 2)))
        for width in RESTART_WIDTHS[: opts.restarts + 1]
    ]

    for label, guess in guesses:
        try:
            q, factor, iterations, _ = _iterate(guess, a_mat, ab, w, qw, params, opts)
            break
        except NonPositive as e:
            metrics.increment(MetricKey.SOLVER_RESTARTS)
            log.warning("ground.solve.restart", guess=label, error=e.message)
    else:
        raise NonPositive("all initial guesses lost positivity")

    metrics.increment(MetricKey.SOLVER_ITERATIONS, iterations)

    # 1. Remove the stabilizing factor: A(cQ) = w(cQ)^{α+1} for c^α = M^{γ_P}
    m_n = float(np.sum(qw * q * (a_mat @ q)) / np.sum(qw * q * _nonlinear_term(q, w, params.alpha)))
    q = q * m_n ** (1.0 / params.alpha)
    residual = float(np.max(np.abs(a_mat @ q - _nonlinear_term(q, w, params.alpha))))

    # 2. Scalars
    q_field = GridField(grid=grid, values=q)
    gs = _assemble(params, q_field, residual, iterations, factor)
    log.info(
        "ground.solve.converged",
        iterations=iterations,
        residual=residual,
        mass=gs.mass_q,
        grad_sq=gs.grad_sq_q,
        potential=gs.potential_q,
    )
    return gs


def _assemble(
    params: ModelParams, q: GridField, residual: float, iterations: int, factor: float
) -> GroundState:
    m, grad_sq, pot = energy_parts(q, params)
    sigma = params.sigma_c
    e_q = grad_sq / 2.0 - pot / (params.alpha + 2.0)
    grad_m_sigma = math.sqrt(grad_sq) * math.sqrt(sigma_weighted(1.0, m, sigma))
    closed = (
        2.0
        * (params.alpha + 2.0)
        / params.scaling_weight
        * grad_m_sigma ** (-params.energy_gap / 2.0)
    )
    return GroundState(
        params=params,
        q=q,
        mass_q=m,
        grad_sq_q=grad_sq,
        potential_q=pot,
        energy_q=e_q,
        c_opt=weinstein_quotient(q, params),
        c_opt_closed=closed,
        thresholds=Thresholds(
            e_m_sigma=sigma_weighted(e_q, m, sigma),
            grad_m_sigma=grad_m_sigma,
            p_m_sigma=sigma_weighted(pot, m, sigma),
        ),
        residual=residual,
        iterations=iterations,
        stabilizing_factor=factor,
    )


# --- Identities ---


def pohozaev_residuals(gs: GroundState) -> PohozaevResiduals:
    p = gs.params
    r1 = abs(gs.mass_q * p.scaling_weight / (p.mass_gap * gs.grad_sq_q) - 1.0)
    r2 = abs(gs.mass_q * 2.0 * (p.alpha + 2.0) / (p.mass_gap * gs.potential_q) - 1.0)
    return PohozaevResiduals(r1=r1, r2=r2)


def sharp_constants(gs: GroundState) -> SharpConstants:
    p = gs.params
    grad_form = p.energy_gap / (2.0 * p.scaling_weight) * gs.grad_sq_q
    pot_form = p.energy_gap / (4.0 * (p.alpha + 2.0)) * gs.potential_q
    threshold_form = p.energy_gap / (2.0 * p.scaling_weight) * gs.thresholds.grad_m_sigma**2
    return SharpConstants(
        c_opt=gs.c_opt,
        c_opt_closed=gs.c_opt_closed,
        e_m_sigma=gs.thresholds.e_m_sigma,
        grad_m_sigma=gs.thresholds.grad_m_sigma,
        p_m_sigma=gs.thresholds.p_m_sigma,
        energy_relations=EnergyRelations(
            r_grad=gs.energy_q / grad_form,
            r_pot=gs.energy_q / pot_form,
            r_threshold=gs.thresholds.e_m_sigma / threshold_form,
        ),
    )


def coercivity_margin(gs: GroundState, a: float) -> Coercivity:
    """
    ρ and ν for data with P·M^σc <= A below the Q level.

    G(f) >= ν‖∇f‖² and E(f) >= (ν/2)‖∇f‖² then hold for every such f.
    """
    p_level = gs.thresholds.p_m_sigma
    if a < 0.0:
        raise OutOfRange("A", f"A >= 0 violated: A={a}")
    if a >= p_level:
        raise AboveThreshold(f"A={a} is not below P(Q)M(Q)^sigma_c={p_level}")
    rho = 1.0 - a / p_level
    p = gs.params
    nu = 1.0 - (1.0 - rho) ** (p.energy_gap / p.scaling_weight)
    return Coercivity(rho=rho, nu=nu)
