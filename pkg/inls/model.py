import math
from typing import TYPE_CHECKING

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from inls.errors import ConfigInvalid, OutOfRange

if TYPE_CHECKING:
    from inls.grid import Field as GridField

logger = structlog.get_logger()


class CriticalExponents(BaseModel):
    """Derived exponents; recomputed from ModelParams, never deserialized."""

    model_config = ConfigDict(frozen=True)

    gamma_c: float = Field(..., description="Scaling-critical Sobolev index")
    sigma_c: float = Field(..., description="Threshold exponent (1 - gamma_c) / gamma_c")
    alpha_max: float = Field(..., description="Energy-critical power, inf for N <= 2")


class ModelParams(BaseModel):
    """
    Parameters of  i u_t + Δu = -|x|^{-b} |u|^α u  on R^N.

    Construction validates the intercritical range. `validation_mode` relaxes
    the checks to 0 <= b and 0 < alpha so that closed-form solitons (b = 0)
    can be reproduced; it never serializes.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(..., description="Spatial dimension N")
    b: float = Field(..., description="Inhomogeneity exponent")
    alpha: float = Field(..., description="Nonlinearity power")
    validation_mode: bool = Field(False, exclude=True)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ModelParams":
        n, b, alpha = self.n, self.b, self.alpha
        if n < 1:
            raise OutOfRange("n", f"N >= 1 violated: N={n}")

        b_cap = min(2.0, float(n))
        if self.validation_mode:
            if not (0.0 <= b < b_cap):
                raise OutOfRange("b", f"0 <= b < min(2, N) violated: b={b}, N={n}")
            if not (0.0 < alpha < _alpha_max(n, b)):
                raise OutOfRange(
                    "alpha", f"0 < alpha < alpha_max(N) violated: alpha={alpha}"
                )
            return self

        if not (0.0 < b < b_cap):
            raise OutOfRange("b", f"0 < b < min(2, N) violated: b={b}, N={n}")
        lower = (4.0 - 2.0 * b) / n
        upper = _alpha_max(n, b)
        if not (lower < alpha < upper):
            raise OutOfRange(
                "alpha",
                f"(4-2b)/N < alpha < alpha_max(N) violated: "
                f"{lower:.6g} < {alpha} < {upper:.6g}",
            )
        return self

    # --- Derived quantities ---

    @property
    def alpha_max(self) -> float:
        return _alpha_max(self.n, self.b)

    @property
    def scaling_weight(self) -> float:
        """N·alpha + 2b."""
        return self.n * self.alpha + 2.0 * self.b

    @property
    def energy_gap(self) -> float:
        """N·alpha - 4 + 2b, positive above the mass-critical power."""
        return self.n * self.alpha - 4.0 + 2.0 * self.b

    @property
    def mass_gap(self) -> float:
        """4 - 2b - (N-2)·alpha, positive below the energy-critical power."""
        return 4.0 - 2.0 * self.b - (self.n - 2) * self.alpha

    @property
    def gamma_c(self) -> float:
        return self.n / 2.0 - (2.0 - self.b) / self.alpha

    @property
    def sigma_c(self) -> float:
        return self.mass_gap / self.energy_gap

    @property
    def scaling_exponent(self) -> float:
        """Amplitude exponent (2-b)/alpha of the scaling symmetry."""
        return (2.0 - self.b) / self.alpha

    @property
    def scattering_regime(self) -> bool:
        return self.n >= 2 and self.b < min(2.0, self.n / 2.0)

    @property
    def exponents(self) -> CriticalExponents:
        return CriticalExponents(
            gamma_c=self.gamma_c, sigma_c=self.sigma_c, alpha_max=self.alpha_max
        )

    @classmethod
    def validation(cls, n: int, alpha: float, b: float = 0.0) -> "ModelParams":
        """Relaxed constructor for closed-form soliton checks."""
        return cls(n=n, b=b, alpha=alpha, validation_mode=True)


def _alpha_max(n: int, b: float) -> float:
    if n <= 2:
        return math.inf
    return (4.0 - 2.0 * b) / (n - 2)


def validate_params(n: int, b: float, alpha: float) -> ModelParams:
    """
    Builds ModelParams or raises a named error.

    Raises:
        OutOfRange: with reason OutOfRange(n|b|alpha) naming the broken inequality.
        ConfigInvalid: when the raw values are not numbers at all.
    """
    try:
        params = ModelParams(n=n, b=b, alpha=alpha)
    except ValidationError as e:
        raise ConfigInvalid(f"malformed parameters: {e.errors()[0]['msg']}") from e
    logger.debug(
        "model.params.validated",
        n=n,
        b=b,
        alpha=alpha,
        gamma_c=params.gamma_c,
        scattering_regime=params.scattering_regime,
    )
    return params


def sigma_weighted(value: float, mass: float, sigma: float) -> float:
    """value · mass^sigma evaluated in log space."""
    if value == 0.0 or mass <= 0.0:
        return 0.0
    return math.copysign(math.exp(math.log(abs(value)) + sigma * math.log(mass)), value)


def rescale(field: "GridField", lam: float, params: ModelParams) -> "GridField":
    """
    u_λ(x) = λ^{(2-b)/α} u(λx), sampled back on the field's own grid.

    Cartesian grids use trigonometric interpolation, staggered axes use
    cubic splines on the even extension.
    """
    from inls.grid import sample_dilated

    if lam <= 0.0:
        raise OutOfRange("lambda", f"lambda > 0 violated: lambda={lam}")
    if lam == 1.0:
        return field
    values = sample_dilated(field, lam) * lam**params.scaling_exponent
    return field.with_values(values)
