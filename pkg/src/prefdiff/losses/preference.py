"""
preference - Hyperparameters shared by the preference objectives.
"""

from __future__ import annotations

from typing import Any, Literal, Self

from pydantic import Field, computed_field

from ..config import Settings
from ..errors import ConfigError
from ..schedule import DEFAULT_T, OMEGA

DEFAULT_ALPHA = 2500.0
DEFAULT_MARGIN = 0.01
DEFAULT_REG_LAMBDA = 0.05


class PreferenceConfig(Settings):
    """
    Scalars of the DPO/CPO objectives.

    ``alpha_scale`` is derived as ``beta_kl * T * omega`` on every access. The
    default ``beta_kl`` gives alpha = 2500 at T = 1000.
    """

    beta_kl: float = Field(
        default=DEFAULT_ALPHA / (DEFAULT_T * OMEGA),
        gt=0.0,
        description="KL temperature beta.",
    )
    T: int = Field(default=DEFAULT_T, ge=1, description="Schedule length.")
    omega: float = Field(default=OMEGA, gt=0.0, description="Constant omega(lambda_t).")
    margin: float = Field(default=DEFAULT_MARGIN, ge=0.0, description="Hinge margin m.")
    reg_lambda: float = Field(
        default=DEFAULT_REG_LAMBDA, ge=0.0, description="Weight of the pretraining regularizer."
    )
    truncate: bool = Field(
        default=True,
        description="Apply the hinge max(d_theta + m, 0); False uses d_theta untruncated.",
    )
    cpo_weight: Literal["contrast", "sigmoid"] = Field(
        default="contrast",
        description=(
            "Detached scale of the final CPO loss: alpha*(d_theta - d_ref) ('contrast') or "
            "sigmoid(alpha*(d_theta - d_ref)) ('sigmoid'). With 'contrast' the active-hinge "
            "gradient is that of (alpha/2)*(d_theta - d_ref)^2: zero at theta == ref and "
            "pulling theta back to the reference. 'sigmoid' starts at 0.5*grad(d_theta) and "
            "lowers d_theta."
        ),
    )

    @computed_field  # type: ignore[prop-decorator]
    @property
    def alpha_scale(self) -> float:
        return self.beta_kl * self.T * self.omega

    @classmethod
    def from_alpha(
        cls,
        alpha: float = DEFAULT_ALPHA,
        T: int = DEFAULT_T,
        omega: float = OMEGA,
        **values: Any,
    ) -> Self:
        """Build a config from alpha, back-deriving beta_kl = alpha / (T * omega)."""
        if T < 1 or omega <= 0:
            raise ConfigError(f"need T >= 1 and omega > 0, got T={T}, omega={omega}")
        return cls.create(beta_kl=alpha / (T * omega), T=T, omega=omega, **values)
