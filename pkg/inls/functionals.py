import csv
import math
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np
import structlog
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import CubicSpline

from inls.errors import (
    GridCutoffMismatch,
    SymmetryViolation,
    TailMassExceeded,
    UnsupportedGrid,
    VarianceUnreliable,
    ZeroField,
)
from inls.grid import Field as GridField
from inls.grid import (
    Grid,
    GridKind,
    Symmetry,
    axis_coordinates,
    dirichlet_integral,
    grad_dot_x,
    grad_norm_sq,
    gradient_values,
    integrate_values,
    mesh,
    radius,
    shell_fraction,
    sphere_area,
    weight_arrays,
)
from inls.model import ModelParams

if TYPE_CHECKING:
    from inls.groundstate import GroundState

logger = structlog.get_logger()

# Share of the |x|²|u|² integrand allowed in the outer shell before the
# variance is declared unreliable.
VARIANCE_TAIL_CAP = 1e-6

CSV_COLUMNS = (
    "t",
    "mass",
    "energy",
    "potential",
    "virial_g",
    "grad_sq",
    "variance",
    "variance_d1",
    "variance_d2",
    "variance_d2_fd",
    "weight_defect",
)


# --- Records ---


class DiagnosticRecord(BaseModel):
    """Every scalar the dynamical criteria read off one snapshot."""

    model_config = ConfigDict(frozen=True)

    t: float
    mass: float
    energy: float
    potential: float
    virial_g: float
    grad_sq: float
    variance: float = math.nan
    variance_d1: float = math.nan
    variance_d2: float
    variance_d2_fd: float = math.nan
    weight_defect: float = Field(
        0.0, description="Extra V'' of the ε-regularized weight; zero on staggered grids"
    )
    variance_reliable: bool = True

    def csv_row(self) -> list[str]:
        return [repr(float(getattr(self, c))) for c in CSV_COLUMNS]


def write_diagnostics_csv(records: Iterable[DiagnosticRecord], path: Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())


def read_diagnostics_csv(path: Path) -> list[DiagnosticRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        DiagnosticRecord(
            **{c: float(row[c]) for c in CSV_COLUMNS},
            variance_reliable=not math.isnan(float(row["variance"])),
        )
        for row in rows
    ]


# --- Scalar functionals ---


def _nonlinear_density(values: np.ndarray, alpha: float) -> np.ndarray:
    return np.abs(values) ** (alpha + 2.0)


def energy_parts(u: GridField, params: ModelParams) -> tuple[float, float, float]:
    """(M, ‖∇u‖², P) of u."""
    grid = u.grid
    w, _, _ = weight_arrays(grid, params.b)
    mass = integrate_values(grid, np.abs(u.values) ** 2).real
    grad_sq = dirichlet_integral(grid, u.values)
    potential = integrate_values(grid, w * _nonlinear_density(u.values, params.alpha)).real
    return mass, grad_sq, potential


def mass(u: GridField) -> float:
    return integrate_values(u.grid, np.abs(u.values) ** 2).real


def potential(u: GridField, params: ModelParams) -> float:
    """P(u) = ∫ w |u|^{α+2}."""
    w, _, _ = weight_arrays(u.grid, params.b)
    return integrate_values(u.grid, w * _nonlinear_density(u.values, params.alpha)).real


def energy(u: GridField, params: ModelParams) -> float:
    _, grad_sq, pot = energy_parts(u, params)
    return grad_sq / 2.0 - pot / (params.alpha + 2.0)


def virial_functional(grad_sq: float, pot: float, params: ModelParams) -> float:
    """G = ‖∇u‖² - (Nα+2b)/(2(α+2))·P."""
    return grad_sq - params.scaling_weight / (2.0 * (params.alpha + 2.0)) * pot


def weinstein_quotient(u: GridField, params: ModelParams) -> float:
    """P(u) / (‖∇u‖^{(Nα+2b)/2} ‖u‖^{(4-2b-(N-2)α)/2})."""
    m, grad_sq, pot = energy_parts(u, params)
    if m <= 0.0 or grad_sq <= 0.0:
        raise ZeroField("quotient undefined for a zero or constant field")
    log_den = params.scaling_weight / 4.0 * math.log(grad_sq) + params.mass_gap / 4.0 * math.log(m)
    return pot * math.exp(-log_den)


def diagnostics(
    u: GridField, params: ModelParams, t: float = 0.0, strict: bool = False
) -> DiagnosticRecord:
    """
    Snapshot of mass, energy, P, G, ‖∇u‖² and the variance data.

    The variance and V' are NaN (record flagged unreliable) when the
    |x|²-weighted density leaks into the outer shell; `strict` turns that into
    TailMassExceeded.
    """
    grid = u.grid
    alpha = params.alpha
    values = u.values
    w, _, kernel = weight_arrays(grid, params.b)

    grads = gradient_values(grid, values)
    dens = np.abs(values) ** 2
    nl = _nonlinear_density(values, alpha)

    m = integrate_values(grid, dens).real
    grad_sq = dirichlet_integral(grid, values)
    pot = integrate_values(grid, w * nl).real
    defect = 8.0 * params.b / (alpha + 2.0) * integrate_values(grid, kernel * nl).real

    weighted = radius(grid) ** 2 * dens
    reliable = shell_fraction(grid, weighted) < VARIANCE_TAIL_CAP
    if reliable:
        variance = integrate_values(grid, weighted).real
        variance_d1 = 4.0 * integrate_values(grid, np.conj(values) * grad_dot_x(grid, grads)).imag
    else:
        if strict:
            raise TailMassExceeded("variance density reaches the outer shell")
        logger.warning("functionals.variance.unreliable", t=t, grid=grid.kind.value)
        variance = variance_d1 = math.nan

    return DiagnosticRecord(
        t=t,
        mass=m,
        energy=grad_sq / 2.0 - pot / (alpha + 2.0),
        potential=pot,
        virial_g=virial_functional(grad_sq, pot, params),
        grad_sq=grad_sq,
        variance=variance,
        variance_d1=variance_d1,
        variance_d2=8.0 * grad_sq - 4.0 * params.scaling_weight / (alpha + 2.0) * pot,
        weight_defect=defect,
        variance_reliable=reliable,
    )


# --- Cutoffs ---


def _bridge() -> Polynomial:
    """
    Quintic bridge p(s), s = r - 1 ∈ [0, 1], joining r² (value 1, slopes 2, 2)
    to zero (value and slopes 0, 0) at r = 2.
    """
    rows, rhs = [], []

    def cond(s: float, order: int, value: float) -> None:
        row = []
        for k in range(6):
            if k < order:
                row.append(0.0)
            else:
                row.append(math.perm(k, order) * s ** (k - order))
        rows.append(row)
        rhs.append(value)

    for order, value in enumerate((1.0, 2.0, 2.0)):
        cond(0.0, order, value)
        cond(1.0, order, 0.0)
    coef = np.linalg.solve(np.array(rows), np.array(rhs))
    return Polynomial(coef)


_BRIDGE = _bridge()
_BRIDGE_DERIVS = [_BRIDGE.deriv(k) for k in range(5)]


def bridge_curvature_max(samples: int = 4001) -> float:
    """
    max of χ'' over the bridge.

    χ'' = 2 for r <= 1; a χ that reaches zero with zero slope at r = 2 must
    exceed 2 somewhere on the bridge, and this is the size of that excess.
    """
    s = np.linspace(0.0, 1.0, samples)
    return float(np.max(_BRIDGE_DERIVS[2](s)))


def profile(x: np.ndarray) -> list[np.ndarray]:
    """χ and its first four derivatives: x² on [0,1], bridge on [1,2], zero after."""
    x = np.asarray(x, dtype=float)
    inner = x <= 1.0
    outer = x >= 2.0
    s = np.clip(x - 1.0, 0.0, 1.0)
    inside = [x**2, 2.0 * x, np.full_like(x, 2.0), np.zeros_like(x), np.zeros_like(x)]
    out = []
    for k in range(5):
        bridge = _BRIDGE_DERIVS[k](s)
        out.append(np.where(inner, inside[k], np.where(outer, 0.0, bridge)))
    return out


class CutoffKind(str, Enum):
    RADIAL_QUADRATIC = "radial_quadratic"
    CYLINDRICAL = "cylindrical"


class Cutoff(BaseModel):
    """
    Localizing weight sampled on a grid.

    RadialQuadratic: φ = R²χ(|x|/R), samples are functions of r = |x| in N dims.
    Cylindrical: φ = ψ(y) + x_N², ψ = R²χ(|y|/R); the derivative samples
    (dphi_over_r, d2phi, hess_coeff, lap_phi, bilap_phi) describe ψ in the
    N-1 transverse dimensions.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: CutoffKind
    radius: float = Field(..., gt=0)
    grid: Grid
    phi: np.ndarray
    dphi_over_r: np.ndarray
    d2phi: np.ndarray
    hess_coeff: np.ndarray
    lap_phi: np.ndarray
    bilap_phi: np.ndarray


def _radial_samples(r: np.ndarray, big_r: float, d: int) -> dict[str, np.ndarray]:
    chi = profile(r / big_r)
    phi = big_r**2 * chi[0]
    d1 = big_r * chi[1]
    d2 = chi[2]
    d3 = chi[3] / big_r
    d4 = chi[4] / big_r**2
    safe = np.where(r > 0, r, 1.0)
    dphi_over_r = np.where(r > 0, d1 / safe, 2.0)
    hess = np.where(r > 0, (d2 - dphi_over_r) / safe**2, 0.0)
    lap = d2 + (d - 1) * dphi_over_r
    bilap = d4 + np.where(
        r > 0, 2.0 * (d - 1) * d3 / safe + (d - 1) * (d - 3) * hess, 0.0
    )
    return {
        "phi": phi,
        "dphi_over_r": dphi_over_r,
        "d2phi": d2,
        "hess_coeff": hess,
        "lap_phi": lap,
        "bilap_phi": bilap,
    }


def _transverse_radius(grid: Grid) -> np.ndarray:
    if grid.kind == GridKind.CYLINDRICAL:
        return mesh(grid)[0]
    if grid.kind == GridKind.CARTESIAN and grid.n == 3:
        x1, x2, _ = mesh(grid)
        return np.sqrt(x1**2 + x2**2)
    raise UnsupportedGrid("cylindrical cutoffs need a cylindrical or 3D cartesian grid")


def make_cutoff(grid: Grid, kind: CutoffKind, big_r: float) -> Cutoff:
    if kind == CutoffKind.RADIAL_QUADRATIC:
        samples = _radial_samples(radius(grid), big_r, grid.n)
    else:
        tau = _transverse_radius(grid)
        samples = _radial_samples(tau, big_r, grid.n - 1)
        samples["phi"] = samples["phi"] + mesh(grid)[-1] ** 2
    return Cutoff(kind=kind, radius=big_r, grid=grid, **samples)


# --- Virial estimates ---


class VirialEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    v: float
    v_d1: float
    v_d2: float
    remainder_bound: float = Field(
        ..., description="v_d2 minus the regularized leading term 8G(u)"
    )


class CylindricalVirial(BaseModel):
    model_config = ConfigDict(frozen=True)

    v_d1: float
    v_d2: float
    defect: float


def _leading_term(u: GridField, params: ModelParams) -> float:
    rec = diagnostics(u, params)
    return 8.0 * rec.virial_g + rec.weight_defect


def localized_virial(
    u: GridField, cutoff: Cutoff, params: ModelParams, form: str = "radial"
) -> VirialEstimate:
    """
    V_φ = ∫φ|u|² and its first two time derivatives along the flow.

    `form="radial"` uses the reduction for radial φ; `form="tensor"` sums
    ∂²_{jk}φ ∂_jū ∂_ku explicitly (cartesian grids only).
    """
    if cutoff.grid != u.grid:
        raise GridCutoffMismatch("cutoff sampled on a different grid")
    if cutoff.kind != CutoffKind.RADIAL_QUADRATIC:
        raise GridCutoffMismatch("localized_virial takes a radial cutoff")
    grid = u.grid
    alpha = params.alpha
    values = u.values
    w, x_dot_grad_w, _ = weight_arrays(grid, params.b)
    grads = gradient_values(grid, values)
    dens = np.abs(values) ** 2
    nl = _nonlinear_density(values, alpha)
    xgrad = grad_dot_x(grid, grads)

    v = integrate_values(grid, cutoff.phi * dens).real
    v_d1 = 2.0 * integrate_values(grid, cutoff.dphi_over_r * xgrad * np.conj(values)).imag

    t_bilap = -integrate_values(grid, cutoff.bilap_phi * dens).real
    if form == "radial" and grid.kind == GridKind.RADIAL:
        # 8‖∇u‖² plus what φ gives up against |x|² outside R
        t_grad = 8.0 * dirichlet_integral(grid, values) + 4.0 * integrate_values(
            grid,
            (cutoff.dphi_over_r - 2.0) * grad_norm_sq(grads)
            + cutoff.hess_coeff * np.abs(xgrad) ** 2,
        ).real
        grad_phi_dot_grad_w = cutoff.dphi_over_r * x_dot_grad_w
    elif form == "radial":
        t_grad = 4.0 * integrate_values(
            grid,
            cutoff.dphi_over_r * grad_norm_sq(grads) + cutoff.hess_coeff * np.abs(xgrad) ** 2,
        ).real
        grad_phi_dot_grad_w = cutoff.dphi_over_r * x_dot_grad_w
    elif form == "tensor":
        if grid.kind != GridKind.CARTESIAN:
            raise UnsupportedGrid("tensor form needs a cartesian grid")
        xs = mesh(grid)
        r2 = radius(grid) ** 2
        s = np.divide(x_dot_grad_w, r2, out=np.zeros_like(r2), where=r2 > 0)
        hess_sum = np.zeros(grid.shape)
        grad_phi_dot_grad_w = np.zeros(grid.shape)
        for j in range(grid.n):
            grad_phi_dot_grad_w = grad_phi_dot_grad_w + (cutoff.dphi_over_r * xs[j]) * (s * xs[j])
            for k in range(grid.n):
                h_jk = cutoff.hess_coeff * xs[j] * xs[k]
                if j == k:
                    h_jk = h_jk + cutoff.dphi_over_r
                hess_sum = hess_sum + (h_jk * np.conj(grads[j]) * grads[k]).real
        t_grad = 4.0 * integrate_values(grid, hess_sum).real
    else:
        raise ValueError(f"unknown virial form {form!r}")

    t_lap = -2.0 * alpha / (alpha + 2.0) * integrate_values(grid, w * cutoff.lap_phi * nl).real
    t_weight = 4.0 / (alpha + 2.0) * integrate_values(grid, grad_phi_dot_grad_w * nl).real
    v_d2 = t_bilap + t_grad + t_lap + t_weight

    return VirialEstimate(
        v=v, v_d1=v_d1, v_d2=v_d2, remainder_bound=v_d2 - _leading_term(u, params)
    )


def cylindrical_virial(u: GridField, cutoff: Cutoff, params: ModelParams) -> CylindricalVirial:
    """Second derivative of V_φ for φ = ψ(y) + x_N² on cylindrically symmetric data."""
    if cutoff.grid != u.grid:
        raise GridCutoffMismatch("cutoff sampled on a different grid")
    if cutoff.kind != CutoffKind.CYLINDRICAL:
        raise GridCutoffMismatch("cylindrical_virial takes a cylindrical cutoff")
    if u.symmetry != Symmetry.CYLINDRICAL or params.n < 3:
        raise SymmetryViolation("data is not in the cylindrical class")
    grid = u.grid
    alpha = params.alpha
    values = u.values
    w, _, _ = weight_arrays(grid, params.b)
    grads = gradient_values(grid, values)
    dens = np.abs(values) ** 2
    nl = _nonlinear_density(values, alpha)

    coords = mesh(grid)
    z = coords[-1]
    if grid.kind == GridKind.CYLINDRICAL:
        tau = coords[0]
        transverse = [grads[0]]
        y_dot_grad = tau * grads[0]
    else:
        tau = np.sqrt(coords[0] ** 2 + coords[1] ** 2)
        transverse = grads[:2]
        y_dot_grad = coords[0] * grads[0] + coords[1] * grads[1]
    dz = grads[-1]
    r2 = radius(grid) ** 2
    w_over_s = w / (r2 + grid.eps**2)

    c = 2.0 * alpha / (alpha + 2.0)
    v_d2 = (
        -integrate_values(grid, cutoff.bilap_phi * dens).real
        + 4.0
        * integrate_values(
            grid,
            cutoff.dphi_over_r * grad_norm_sq(transverse)
            + cutoff.hess_coeff * np.abs(y_dot_grad) ** 2,
        ).real
        - c * integrate_values(grid, w * cutoff.lap_phi * nl).real
        - 4.0 * params.b / (alpha + 2.0)
        * integrate_values(grid, cutoff.dphi_over_r * tau**2 * w_over_s * nl).real
        + 8.0 * integrate_values(grid, np.abs(dz) ** 2).real
        - 2.0 * c * integrate_values(grid, w * nl).real
        - 8.0 * params.b / (alpha + 2.0) * integrate_values(grid, z**2 * w_over_s * nl).real
    )
    v_d1 = 2.0 * integrate_values(
        grid, (cutoff.dphi_over_r * y_dot_grad + 2.0 * z * dz) * np.conj(values)
    ).imag
    return CylindricalVirial(v_d1=v_d1, v_d2=v_d2, defect=v_d2 - _leading_term(u, params))


# --- Embeddings and inequalities ---


def strauss_constant(d: int) -> float:
    """Radial bound: sup r^{(d-1)/2}|f| <= C(d)·‖f‖^{1/2}‖∇f‖^{1/2}, C(d)² = 2/|S^{d-1}|."""
    return math.sqrt(2.0 / sphere_area(d))


def _refined_peak(r: np.ndarray, profile_values: np.ndarray, even: bool) -> float:
    """Max of a sampled profile, refined by a local cubic spline around the top sample."""
    k = int(np.argmax(profile_values))
    lo, hi = max(k - 4, 0), min(k + 5, r.size)
    xs, ys = r[lo:hi], profile_values[lo:hi]
    if even and lo == 0:
        xs = np.concatenate([-xs[::-1], xs])
        ys = np.concatenate([ys[::-1], ys])
    top = float(profile_values[k])
    if xs.size < 4:
        return top
    spline = CubicSpline(xs, ys)
    for c in spline.derivative().roots(extrapolate=False):
        top = max(top, float(spline(c)))
    return top


def strauss_ratio(u: GridField) -> float:
    """sup r^{(d-1)/2}|u| / (‖u‖^{1/2}‖∇u‖^{1/2}) on a radial grid of dimension d."""
    grid = u.grid
    if grid.kind != GridKind.RADIAL:
        raise UnsupportedGrid("strauss_ratio needs a radial grid")
    if not np.any(u.values):
        raise ZeroField("strauss ratio of the zero field")
    r = axis_coordinates(grid)[0]
    top = _refined_peak(r, r ** ((grid.n - 1) / 2.0) * np.abs(u.values), even=grid.n == 1)
    m = integrate_values(grid, np.abs(u.values) ** 2).real
    grad_sq = dirichlet_integral(grid, u.values)
    return top / math.sqrt(math.sqrt(m) * math.sqrt(grad_sq))


class FiniteVarianceBound(BaseModel):
    model_config = ConfigDict(frozen=True)

    lhs: float
    rhs: float
    slack: float
    bracket: float = Field(..., description="‖∇u‖² minus the GN-controlled part")


def finite_variance_inequality(
    u: GridField, gs: "GroundState", params: ModelParams
) -> FiniteVarianceBound:
    """(Im∫ū x·∇u)² <= ‖xu‖²·(‖∇u‖² - C^{-4/(Nα+2b)} M^{-(4-2b-(N-2)α)/(Nα+2b)} P^{4/(Nα+2b)})."""
    rec = diagnostics(u, params)
    if not rec.variance_reliable:
        raise VarianceUnreliable("variance of u is not reliably computable on this grid")
    if rec.mass == 0.0:
        return FiniteVarianceBound(lhs=0.0, rhs=0.0, slack=0.0, bracket=0.0)
    k = params.scaling_weight
    controlled = math.exp(
        -4.0 / k * math.log(gs.c_opt)
        - params.mass_gap / k * math.log(rec.mass)
        + (4.0 / k * math.log(rec.potential) if rec.potential > 0 else -math.inf)
    )
    bracket = rec.grad_sq - controlled
    lhs = (rec.variance_d1 / 4.0) ** 2
    rhs = rec.variance * bracket
    return FiniteVarianceBound(lhs=lhs, rhs=rhs, slack=rhs - lhs, bracket=bracket)


def h1_phase_distance(u: GridField, ref: GridField) -> float:
    """min over θ of ‖u - e^{iθ}ref‖_{H¹}."""
    if u.grid != ref.grid:
        raise GridCutoffMismatch("reference profile lives on a different grid")
    grid = u.grid
    gu = gradient_values(grid, u.values)
    gr = gradient_values(grid, ref.values)
    norm_u = integrate_values(grid, np.abs(u.values) ** 2 + grad_norm_sq(gu)).real
    norm_r = integrate_values(grid, np.abs(ref.values) ** 2 + grad_norm_sq(gr)).real
    overlap = integrate_values(
        grid, np.conj(u.values) * ref.values + sum(np.conj(a) * b for a, b in zip(gu, gr))
    )
    return math.sqrt(max(0.0, norm_u + norm_r - 2.0 * abs(overlap)))
