import csv
import math
import struct
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import structlog
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn
from scipy.special import zetac

from inls.errors import (
    ConfigInvalid,
    ResampleOutOfDomain,
    SingularAtOrigin,
    SymmetryViolation,
    UnsupportedGrid,
)

logger = structlog.get_logger()


# --- Enums ---


class GridKind(str, Enum):
    CARTESIAN = "cartesian"
    RADIAL = "radial"
    CYLINDRICAL = "cylindrical"


class Symmetry(str, Enum):
    NONE = "none"
    RADIAL = "radial"
    CYLINDRICAL = "cylindrical"


# Fraction of each axis treated as the outer shell by the tail guards.
SHELL_FRACTION = 0.1
# Field magnitude (relative to its max) below which the box edge counts as vacuum.
EDGE_VACUUM = 1e-10


# --- Domain Entities ---


class Grid(BaseModel):
    """
    Discretized domain.

    Cartesian: periodic box, x = -extent + offset + j·h, h = 2·extent/dims.
    Radial: staggered half line r_j = (j + 1/2)·h, h = extent/dims, measure ω_{N-1} r^{N-1}.
    Cylindrical (N = 3): staggered τ axis with measure 2π τ times a periodic x_N axis.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: GridKind
    n: int
    dims: tuple[int, ...]
    extent: tuple[float, ...]
    offset: tuple[float, ...] = ()
    weight_eps: Optional[float] = None

    @model_validator(mode="after")
    def _check_layout(self) -> "Grid":
        axes = len(self.dims)
        if self.kind == GridKind.CARTESIAN:
            expected = self.n
        elif self.kind == GridKind.RADIAL:
            expected = 1
        else:
            expected = 2
            if self.n != 3:
                raise UnsupportedGrid("cylindrical grids require N = 3")
        if not 1 <= self.n <= 3:
            raise UnsupportedGrid(f"dimensions N > 3 are not supported (N={self.n})")
        if axes != expected or len(self.extent) != axes:
            raise UnsupportedGrid(
                f"{self.kind.value} grid with N={self.n} needs {expected} axes"
            )
        if self.offset and len(self.offset) != axes:
            raise UnsupportedGrid("offset must give one shift per axis")
        if any(d < 8 for d in self.dims):
            raise UnsupportedGrid("every axis needs at least 8 points")
        if any(e <= 0 for e in self.extent):
            raise UnsupportedGrid("extent must be positive")
        if self.kind != GridKind.CARTESIAN and self.offset and self.offset[0] != 0.0:
            raise UnsupportedGrid("staggered axes cannot be shifted")
        if self.weight_eps is not None and self.weight_eps < 0:
            raise UnsupportedGrid("weight_eps must be >= 0")
        return self

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def shifts(self) -> tuple[float, ...]:
        return self.offset or tuple(0.0 for _ in self.dims)

    @property
    def spacing(self) -> tuple[float, ...]:
        hs = []
        for axis, (d, e) in enumerate(zip(self.dims, self.extent)):
            staggered = axis == 0 and self.kind != GridKind.CARTESIAN
            hs.append(e / d if staggered else 2.0 * e / d)
        return tuple(hs)

    @property
    def eps(self) -> float:
        """Resolved regularization length of the singular weight."""
        if self.weight_eps is not None:
            return self.weight_eps
        if self.kind == GridKind.CARTESIAN:
            return min(self.spacing) / 2.0
        return 0.0

    def is_staggered(self, axis: int) -> bool:
        return axis == 0 and self.kind != GridKind.CARTESIAN

    def radial_dimension(self) -> int:
        """Dimension of the space the staggered axis is the radius of."""
        if self.kind == GridKind.RADIAL:
            return self.n
        if self.kind == GridKind.CYLINDRICAL:
            return self.n - 1
        raise UnsupportedGrid("cartesian grids have no radial axis")


class Field(BaseModel):
    """Complex samples on a grid plus the claimed symmetry class."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray
    symmetry: Symmetry = Symmetry.NONE

    @model_validator(mode="before")
    @classmethod
    def _default_symmetry(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("symmetry") is None:
            grid = data.get("grid")
            kind = getattr(grid, "kind", None)
            data = dict(data)
            if kind == GridKind.RADIAL:
                data["symmetry"] = Symmetry.RADIAL
            elif kind == GridKind.CYLINDRICAL:
                data["symmetry"] = Symmetry.CYLINDRICAL
            else:
                data["symmetry"] = Symmetry.NONE
        return data

    @field_validator("values", mode="before")
    @classmethod
    def _as_complex(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=np.complex128, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_samples(self) -> "Field":
        if self.values.shape != self.grid.shape:
            if self.values.size != self.grid.size:
                raise ConfigInvalid(
                    f"field has {self.values.size} samples, grid has {self.grid.size}"
                )
            reshaped = self.values.reshape(self.grid.shape)
            reshaped.setflags(write=False)
            object.__setattr__(self, "values", reshaped)
        if self.symmetry == Symmetry.CYLINDRICAL and self.grid.kind == GridKind.CARTESIAN:
            check_cylindrical_symmetry(self.grid, self.values)
        if self.symmetry == Symmetry.CYLINDRICAL and self.grid.kind == GridKind.RADIAL:
            raise SymmetryViolation("cylindrical claim on a radial grid")
        return self

    def with_values(self, values: np.ndarray, symmetry: Optional[Symmetry] = None) -> "Field":
        return Field(grid=self.grid, values=values, symmetry=symmetry or self.symmetry)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid=grid, values=np.zeros(grid.shape, dtype=np.complex128))

    def __mul__(self, other: complex) -> "Field":
        return self.with_values(self.values * other)

    __rmul__ = __mul__


# --- Coordinates and quadrature ---


@lru_cache(maxsize=64)
def axis_coordinates(grid: Grid) -> tuple[np.ndarray, ...]:
    axes = []
    for axis, (d, h) in enumerate(zip(grid.dims, grid.spacing)):
        j = np.arange(d, dtype=float)
        if grid.is_staggered(axis):
            axes.append((j + 0.5) * h)
        else:
            axes.append(-grid.extent[axis] + grid.shifts[axis] + j * h)
    return tuple(axes)


@lru_cache(maxsize=64)
def mesh(grid: Grid) -> tuple[np.ndarray, ...]:
    return tuple(np.meshgrid(*axis_coordinates(grid), indexing="ij"))


@lru_cache(maxsize=64)
def radius(grid: Grid) -> np.ndarray:
    """|x| at every sample."""
    return np.sqrt(sum(c**2 for c in mesh(grid)))


def sphere_area(d: int) -> float:
    """|S^{d-1}|: 2 for d=1, 2π for d=2, 4π for d=3."""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def _radial_axis_weights(n_pts: int, h: float, d: int) -> np.ndarray:
    r = (np.arange(n_pts) + 0.5) * h
    w = sphere_area(d) * r ** (d - 1) * h
    if d == 2:
        # Midpoint rule on r·g(r) is only second order at r = 0; subtract the
        # h²/24·g(0) term with g(0) extrapolated from the first two samples.
        w[0] -= sphere_area(2) * h**2 / 24.0 * 9.0 / 8.0
        w[1] += sphere_area(2) * h**2 / 24.0 / 8.0
    return w


@lru_cache(maxsize=64)
def quadrature_weights(grid: Grid) -> np.ndarray:
    if grid.kind == GridKind.CARTESIAN:
        return np.full(grid.shape, float(np.prod(grid.spacing)))
    w_r = _radial_axis_weights(grid.dims[0], grid.spacing[0], grid.radial_dimension())
    if grid.kind == GridKind.RADIAL:
        return w_r
    return np.outer(w_r, np.full(grid.dims[1], grid.spacing[1]))


def integrate_values(grid: Grid, values: np.ndarray) -> complex:
    return complex(np.sum(quadrature_weights(grid) * values))


def integrate(f: Field) -> complex:
    """Quadrature of f over R^N (periodic trapezoid / staggered midpoint rules)."""
    return integrate_values(f.grid, f.values)


@lru_cache(maxsize=64)
def outer_shell(grid: Grid) -> np.ndarray:
    """Boolean mask of the outer shell used by tail-mass guards."""
    masks = []
    for axis, d in enumerate(grid.dims):
        j = np.arange(d)
        if grid.is_staggered(axis):
            m = j >= math.floor((1.0 - SHELL_FRACTION) * d)
        else:
            cut = max(1, math.ceil(SHELL_FRACTION / 2.0 * d))
            m = (j < cut) | (j >= d - cut)
        masks.append(m)
    grids = np.meshgrid(*masks, indexing="ij")
    out = np.zeros(grid.shape, dtype=bool)
    for m in grids:
        out |= m
    return out


def shell_fraction(grid: Grid, density: np.ndarray) -> float:
    """Share of ∫density carried by the outer shell."""
    total = integrate_values(grid, density).real
    if total <= 0.0:
        return 0.0
    shell = integrate_values(grid, np.where(outer_shell(grid), density, 0.0)).real
    return shell / total


# --- Differential operators ---


_D1 = {-2: 1.0 / 12.0, -1: -8.0 / 12.0, 1: 8.0 / 12.0, 2: -1.0 / 12.0}
_D2 = {-2: -1.0 / 12.0, -1: 16.0 / 12.0, 0: -30.0 / 12.0, 1: 16.0 / 12.0, 2: -1.0 / 12.0}


def _stencil_matrix(n_pts: int, stencil: dict[int, float], parity: float) -> sp.csr_matrix:
    """
    Centered 5-point stencil on the staggered half line.

    Ghosts below r = 0 mirror into the grid with the given parity
    (r_{-1-j} = -r_j); ghosts beyond the last sample are zero.
    """
    offsets = sorted(stencil)
    mat = sp.diags(
        [np.full(n_pts - abs(o), stencil[o]) for o in offsets],
        offsets,
        shape=(n_pts, n_pts),
        format="lil",
    )
    for i in range(2):
        for o, c in stencil.items():
            j = i + o
            if j < 0:
                mat[i, -1 - j] += parity * c
    return mat.tocsr()


class RadialOperators:
    """4th-order FD operators on a staggered radial axis of a d-dimensional space."""

    def __init__(self, n_pts: int, h: float, d: int) -> None:
        self.n_pts = n_pts
        self.h = h
        self.d = d
        self.r = (np.arange(n_pts) + 0.5) * h

        self.d1 = _stencil_matrix(n_pts, _D1, parity=1.0) / h
        if d == 3:
            # Δf = (1/r)(r f)''; r f is odd so the mirrored stencil stays symmetric.
            d2_odd = _stencil_matrix(n_pts, _D2, parity=-1.0) / h**2
            self.lap = (sp.diags(1.0 / self.r) @ d2_odd @ sp.diags(self.r)).tocsr()
        else:
            d2_even = _stencil_matrix(n_pts, _D2, parity=1.0) / h**2
            self.lap = (d2_even + (d - 1) * sp.diags(1.0 / self.r) @ self.d1).tocsr()

    def banded(self, mat: sp.spmatrix) -> np.ndarray:
        """Pentadiagonal matrix in scipy.linalg.solve_banded layout (l = u = 2)."""
        coo = sp.coo_matrix(mat)
        ab = np.zeros((5, self.n_pts), dtype=coo.dtype)
        ab[2 + coo.row - coo.col, coo.col] = coo.data
        return ab


@lru_cache(maxsize=32)
def radial_operators(grid: Grid) -> RadialOperators:
    return RadialOperators(grid.dims[0], grid.spacing[0], grid.radial_dimension())


@lru_cache(maxsize=64)
def wavenumbers(grid: Grid, axis: int) -> np.ndarray:
    d, h = grid.dims[axis], grid.spacing[axis]
    return 2.0 * np.pi * sfft.fftfreq(d, d=h)


def _shape_along(k: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = k.size
    return k.reshape(shape)


def _spectral_derivative(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    k = wavenumbers(grid, axis).copy()
    if k.size % 2 == 0:
        k[k.size // 2] = 0.0  # Nyquist mode has no odd derivative on the grid
    k = _shape_along(k, axis, values.ndim)
    return sfft.ifft(1j * k * sfft.fft(values, axis=axis), axis=axis)


def _spectral_second(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    k = _shape_along(wavenumbers(grid, axis), axis, values.ndim)
    return sfft.ifft(-(k**2) * sfft.fft(values, axis=axis), axis=axis)


def gradient_values(grid: Grid, values: np.ndarray) -> list[np.ndarray]:
    if grid.kind == GridKind.CARTESIAN:
        return [_spectral_derivative(values, grid, a) for a in range(grid.n)]
    ops = radial_operators(grid)
    if grid.kind == GridKind.RADIAL:
        return [ops.d1 @ values]
    return [ops.d1 @ values, _spectral_derivative(values, grid, 1)]


def gradient(f: Field) -> list[Field]:
    """
    Cartesian: spectral per axis. Radial: [∂_r f]. Cylindrical: [∂_τ f, ∂_{x_N} f].
    """
    return [
        Field(grid=f.grid, values=g, symmetry=Symmetry.NONE)
        for g in gradient_values(f.grid, f.values)
    ]


def laplacian_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    if grid.kind == GridKind.CARTESIAN:
        out = np.zeros_like(values, dtype=np.complex128)
        for a in range(grid.n):
            out += _spectral_second(values, grid, a)
        return out
    ops = radial_operators(grid)
    if grid.kind == GridKind.RADIAL:
        return ops.lap @ values
    return ops.lap @ values + _spectral_second(values, grid, 1)


def laplacian(f: Field) -> Field:
    return f.with_values(laplacian_values(f.grid, f.values))


def grad_dot_x(grid: Grid, grads: list[np.ndarray]) -> np.ndarray:
    """x·∇u from gradient components."""
    if grid.kind == GridKind.RADIAL:
        return axis_coordinates(grid)[0] * grads[0]
    return sum(c * g for c, g in zip(mesh(grid), grads))


def grad_norm_sq(grads: list[np.ndarray]) -> np.ndarray:
    return sum(np.abs(g) ** 2 for g in grads)


def dirichlet_integral(grid: Grid, values: np.ndarray) -> float:
    """
    ‖∇u‖².

    Radial grids pair u with the discrete Laplacian, -Re Σ qw·ū·Δ_h u, which
    is the quadratic form the solver and the flow see.
    """
    if grid.kind == GridKind.RADIAL:
        lap = radial_operators(grid).lap @ values
        return -integrate_values(grid, np.conj(values) * lap).real
    return integrate_values(grid, grad_norm_sq(gradient_values(grid, values))).real


def sobolev_seminorm(f: Field, gamma: float) -> float:
    """
    Homogeneous Ḣ^γ seminorm.

    Spectral on Cartesian grids for any γ >= 0; staggered grids support γ ∈ {0, 1}.
    """
    grid = f.grid
    if grid.kind == GridKind.CARTESIAN:
        spec = sfft.fftn(f.values)
        k2 = sum(
            _shape_along(wavenumbers(grid, a), a, grid.n) ** 2 for a in range(grid.n)
        )
        mult = np.where(k2 > 0, k2**gamma, 1.0 if gamma == 0 else 0.0)
        total = np.sum(mult * np.abs(spec) ** 2) * np.prod(grid.spacing) / grid.size
        return float(np.sqrt(total))
    if gamma == 0:
        return float(np.sqrt(integrate_values(grid, np.abs(f.values) ** 2).real))
    if gamma == 1:
        return float(np.sqrt(max(dirichlet_integral(grid, f.values), 0.0)))
    raise UnsupportedGrid(f"fractional seminorm gamma={gamma} needs a cartesian grid")


# --- Singular weight ---

# Expansion powers closer than this share one correction condition.
POWER_MERGE = 0.1


def _half_offset_zeta(x: float) -> float:
    """Hurwitz ζ(x, 1/2) = (2^x - 1)ζ(x)."""
    return (2.0**x - 1.0) * (1.0 + float(zetac(x)))


def _singular_powers(b: float) -> list[float]:
    """Powers p in the small-r expansion of |u|^{α+2} for u solving the weighted equation."""
    kept: list[float] = []
    for p in sorted({0.0, 2.0 - b, 2.0, 4.0 - 2.0 * b, 4.0 - b, 4.0}):
        if not kept or p - kept[-1] > POWER_MERGE:
            kept.append(p)
    return kept


def origin_correction(h: float, s: float, powers: list[float]) -> np.ndarray:
    """
    Endpoint weights c_i on the first 2·len(powers) samples of a staggered axis.

    The midpoint sum of r^{s+p} over r_i = (i + 1/2)h misses ∫_0^∞ by
    h^{s+p+1}ζ(-s-p, 1/2); adding Σ c_i r_i^p cancels that term for every p.
    """
    nodes = np.arange(2 * len(powers)) + 0.5
    lhs = np.array([nodes**p for p in powers])
    rhs = np.array([-_half_offset_zeta(-(s + p)) for p in powers])
    coef, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return h ** (s + 1.0) * coef


def _pointwise_weight(grid: Grid, b: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    eps = grid.eps
    r2 = radius(grid) ** 2
    s = r2 + eps**2
    if eps == 0.0 and np.any(s == 0.0):
        raise SingularAtOrigin(
            "weight_eps = 0 with a sample at the origin", reason="SingularAtOrigin"
        )
    return s ** (-b / 2.0), r2, s


@lru_cache(maxsize=32)
def weight_arrays(grid: Grid, b: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Weight samples used by every |x|^{-b} integral, the solver and the flow.

    Cartesian and cylindrical grids: w = (|x|² + ε²)^{-b/2},
    x·∇w = -b|x|²(|x|² + ε²)^{-b/2-1} and the regularization kernel
    ε²(|x|² + ε²)^{-b/2-1}.

    Radial grids: w_i = r_i^{-b} plus an origin correction on the first
    samples, so that Σ qw_i w_i g(r_i) integrates r^{N-1-b}g to high order;
    x·∇w = -b·w and the kernel vanishes. Corrected samples may be negative.
    """
    if b == 0.0:
        ones = np.ones(grid.shape)
        return ones, np.zeros(grid.shape), np.zeros(grid.shape)
    w, r2, s = _pointwise_weight(grid, b)
    if grid.kind == GridKind.RADIAL:
        d, h = grid.n, grid.spacing[0]
        exponent = d - 1.0 - b
        corr = origin_correction(h, exponent, _singular_powers(b))
        target = sphere_area(d) * h * axis_coordinates(grid)[0] ** exponent
        target[: corr.size] += sphere_area(d) * corr
        w = target / quadrature_weights(grid)
        x_dot_grad = -b * w
        kernel = np.zeros(grid.shape)
    else:
        x_dot_grad = -b * r2 * s ** (-b / 2.0 - 1.0)
        kernel = grid.eps**2 * s ** (-b / 2.0 - 1.0)
    for arr in (w, x_dot_grad, kernel):
        arr.setflags(write=False)
    return w, x_dot_grad, kernel


def singular_weight(grid: Grid, b: float) -> Field:
    """w(x) = (|x|² + ε²)^{-b/2}; exactly |x|^{-b} on staggered grids."""
    if b == 0.0:
        return Field(grid=grid, values=np.ones(grid.shape))
    w, _, _ = _pointwise_weight(grid, float(b))
    return Field(grid=grid, values=w)


def effective_weight(grid: Grid, b: float) -> Field:
    """The weight samples the flow and the functionals actually use."""
    w, _, _ = weight_arrays(grid, float(b))
    return Field(grid=grid, values=np.array(w))


# --- Symmetry checks ---


def check_cylindrical_symmetry(grid: Grid, values: np.ndarray, tol: float = 1e-10) -> None:
    """Quarter-turn invariance in the first two coordinates of a 3D cartesian grid."""
    if grid.kind != GridKind.CARTESIAN or grid.n != 3:
        raise SymmetryViolation("cylindrical check needs a 3D cartesian grid")
    if (
        grid.dims[0] != grid.dims[1]
        or grid.extent[0] != grid.extent[1]
        or grid.shifts[0] != 0.0
        or grid.shifts[1] != 0.0
    ):
        raise SymmetryViolation("transverse axes are not rotation compatible")
    reflected = np.roll(np.flip(values, axis=0), 1, axis=0)
    rotated = np.swapaxes(reflected, 0, 1)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    err = float(np.max(np.abs(rotated - values))) / scale
    if err > tol:
        raise SymmetryViolation(f"field is not cylindrically symmetric (defect {err:.2e})")


# --- Resampling ---


def _edge_is_vacuum(values: np.ndarray, grid: Grid) -> bool:
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    if peak == 0.0:
        return True
    edge = float(np.max(np.abs(np.where(outer_shell(grid), values, 0.0))))
    return edge <= EDGE_VACUUM * peak


def _trig_matrix(grid: Grid, axis: int, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows evaluate the trigonometric interpolant at targets; outside rows are zero."""
    x = axis_coordinates(grid)[axis]
    d = x.size
    lo, hi = x[0], x[0] + 2.0 * grid.extent[axis]
    inside = (targets >= lo) & (targets < hi)
    k = wavenumbers(grid, axis)
    phase = np.outer(targets - lo, k)
    basis = np.exp(1j * phase) / d
    if d % 2 == 0:
        basis[:, d // 2] = np.cos(phase[:, d // 2]) / d
    dft = sfft.fft(np.eye(d), axis=0)
    mat = basis @ dft
    mat[~inside] = 0.0
    return mat, inside


def _even_spline_eval(r: np.ndarray, values: np.ndarray, targets: np.ndarray, axis: int) -> np.ndarray:
    """Cubic spline through the even extension f(-r) = f(r)."""
    xs = np.concatenate([-r[::-1], r])
    ext = np.concatenate([np.flip(values, axis=axis), values], axis=axis)
    re = CubicSpline(xs, ext.real, axis=axis)(targets)
    im = CubicSpline(xs, ext.imag, axis=axis)(targets)
    out = re + 1j * im
    outside = targets > r[-1]
    if np.any(outside):
        index = [slice(None)] * values.ndim
        index[axis] = outside
        out[tuple(index)] = 0.0
    return out


def sample_dilated(f: Field, lam: float) -> np.ndarray:
    """Samples of u(λx) on f's own grid."""
    grid = f.grid
    values = np.asarray(f.values)
    escaped = False
    out = values
    for axis, coords in enumerate(axis_coordinates(grid)):
        targets = lam * coords
        if grid.is_staggered(axis):
            escaped |= bool(np.any(targets > coords[-1]))
            out = _even_spline_eval(coords, out, targets, axis)
        else:
            mat, inside = _trig_matrix(grid, axis, targets)
            escaped |= bool(not np.all(inside))
            out = np.moveaxis(np.tensordot(mat, out, axes=([1], [axis])), 0, axis)
    if escaped and not _edge_is_vacuum(values, grid):
        raise ResampleOutOfDomain(
            f"lambda={lam} samples beyond the grid extent where the field is not negligible"
        )
    return out


def resample_radial(f: Field, target: Grid) -> Field:
    """Transfers a radial profile onto any grid of the same dimension via |x|."""
    if f.grid.kind != GridKind.RADIAL:
        raise UnsupportedGrid("resample_radial needs a field on a radial grid")
    if target.n != f.grid.n:
        raise UnsupportedGrid(f"dimension mismatch: {f.grid.n} vs {target.n}")
    r = axis_coordinates(f.grid)[0]
    rr = radius(target).ravel()
    vals = _even_spline_eval(r, np.asarray(f.values), rr, axis=0).reshape(target.shape)
    if np.any(rr > r[-1]) and not _edge_is_vacuum(np.asarray(f.values), f.grid):
        raise ResampleOutOfDomain("target grid reaches beyond the radial profile")
    symmetry = Symmetry.RADIAL if target.kind != GridKind.CYLINDRICAL else None
    return Field(grid=target, values=vals, symmetry=symmetry)


# --- Serialization ---

# Layout (little endian):
#   8s   magic
#   4B   kind, axes, N, symmetry
#   d    weight_eps (NaN when left to the grid default)
#   axes*I dims, axes*d extent, axes*d offset
#   payload: complex128 samples in C order, i.e. interleaved re/im float64
_MAGIC = b"INLSFLD1"
_KINDS = list(GridKind)
_SYMS = list(Symmetry)


def write_field(f: Field, path: Path) -> None:
    grid = f.grid
    axes = len(grid.dims)
    header = struct.pack(
        f"<8s4Bd{axes}I{axes}d{axes}d",
        _MAGIC,
        _KINDS.index(grid.kind),
        axes,
        grid.n,
        _SYMS.index(f.symmetry),
        math.nan if grid.weight_eps is None else grid.weight_eps,
        *grid.dims,
        *grid.extent,
        *grid.shifts,
    )
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def read_field(path: Path) -> Field:
    raw = Path(path).read_bytes()
    head = struct.calcsize("<8s4Bd")
    magic, kind, axes, n, sym, eps = struct.unpack("<8s4Bd", raw[:head])
    if magic != _MAGIC:
        raise ConfigInvalid(f"{path} is not a field file")
    tail_fmt = f"<{axes}I{axes}d{axes}d"
    tail = struct.unpack(tail_fmt, raw[head : head + struct.calcsize(tail_fmt)])
    dims = tuple(int(v) for v in tail[:axes])
    extent = tuple(tail[axes : 2 * axes])
    offset = tuple(tail[2 * axes :])
    grid = Grid(
        kind=_KINDS[kind],
        n=n,
        dims=dims,
        extent=extent,
        offset=offset if any(offset) else (),
        weight_eps=None if math.isnan(eps) else eps,
    )
    payload = np.frombuffer(raw, dtype="<c16", offset=head + struct.calcsize(tail_fmt))
    return Field(grid=grid, values=payload.reshape(dims), symmetry=_SYMS[sym])


def write_field_csv(f: Field, path: Path) -> None:
    """One row per sample: coordinates, re, im."""
    names = ["r"] if f.grid.kind == GridKind.RADIAL else (
        ["tau", "z"] if f.grid.kind == GridKind.CYLINDRICAL else ["x", "y", "z"][: f.grid.n]
    )
    coords = [c.ravel() for c in mesh(f.grid)]
    vals = f.values.ravel()
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, "re", "im"])
        for i in range(vals.size):
            writer.writerow(
                [*(repr(float(c[i])) for c in coords), repr(float(vals[i].real)), repr(float(vals[i].imag))]
            )
