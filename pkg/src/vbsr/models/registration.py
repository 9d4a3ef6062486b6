"""
Registration parameters and the HR/LR sampling grid.

Pixel centers sit at half-integer offsets from the image center, which is the
coordinate origin of both grids; one unit is one pixel of the respective image.
"""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from vbsr.exceptions import DomainError

FloatArray = npt.NDArray[np.float64]

PARAMETER_NAMES: tuple[str, str, str, str] = ("theta", "o_h", "o_v", "gamma")

# Diagonal of the Gaussian registration prior covariance, in PARAMETER_NAMES order
REGISTRATION_PRIOR_VARIANCE: tuple[float, float, float, float] = (1e-3, 1.0, 1.0, 1e-3)


def registration_prior_mean(alpha: float) -> FloatArray:
    """Prior mean [0, 0, 0, 12 / alpha^2]: a PSF about as wide as one LR pixel."""
    return np.array([0.0, 0.0, 0.0, 12.0 / alpha**2], dtype=np.float64)


class RegistrationParams(BaseModel):
    """Per-frame warp and blur: rotation, translation and PSF precision."""

    model_config = ConfigDict(frozen=True)

    theta: float = Field(default=0.0, description="Planar rotation in radians")
    o_h: float = Field(default=0.0, description="Horizontal translation in HR pixels")
    o_v: float = Field(default=0.0, description="Vertical translation in HR pixels")
    gamma: float = Field(gt=0.0, description="Gaussian PSF precision in HR pixels^-2")

    def as_array(self) -> FloatArray:
        return np.array([self.theta, self.o_h, self.o_v, self.gamma], dtype=np.float64)

    @classmethod
    def from_array(cls, values: npt.ArrayLike) -> RegistrationParams:
        theta, o_h, o_v, gamma = (float(v) for v in np.asarray(values, dtype=np.float64))
        return cls(theta=theta, o_h=o_h, o_v=o_v, gamma=gamma)


def _centers(width: int, height: int) -> FloatArray:
    cols = np.arange(width, dtype=np.float64) - (width - 1) / 2.0
    rows = np.arange(height, dtype=np.float64) - (height - 1) / 2.0
    h, v = np.meshgrid(cols, rows)
    return np.column_stack([h.ravel(), v.ravel()])


class GridSpec(BaseModel):
    """HR and LR image sizes; the enhancement factor follows from them."""

    model_config = ConfigDict(frozen=True)

    hr_width: int = Field(ge=1)
    hr_height: int = Field(ge=1)
    lr_width: int = Field(ge=1)
    lr_height: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_enhancement(self) -> GridSpec:
        if self.n_hr <= self.n_lr:
            raise ValueError(
                f"HR grid {self.hr_width}x{self.hr_height} must have more pixels than "
                f"LR grid {self.lr_width}x{self.lr_height}"
            )
        return self

    @classmethod
    def from_factor(cls, hr_width: int, hr_height: int, alpha: float) -> GridSpec:
        """LR grid obtained by dividing each HR side by ``alpha``."""
        lr_w = hr_width / alpha
        lr_h = hr_height / alpha
        if not (math.isclose(lr_w, round(lr_w)) and math.isclose(lr_h, round(lr_h))):
            raise DomainError(f"HR size {hr_width}x{hr_height} is not divisible by alpha={alpha}")
        return cls(
            hr_width=hr_width, hr_height=hr_height, lr_width=round(lr_w), lr_height=round(lr_h)
        )

    @property
    def n_hr(self) -> int:
        return self.hr_width * self.hr_height

    @property
    def n_lr(self) -> int:
        return self.lr_width * self.lr_height

    @property
    def alpha(self) -> float:
        return math.sqrt(self.n_hr / self.n_lr)

    def hr_centers(self) -> FloatArray:
        """(N_x, 2) array of HR pixel centers, columns (h, v)."""
        return _centers(self.hr_width, self.hr_height)

    def lr_centers(self) -> FloatArray:
        """(N_y, 2) array of LR pixel centers, columns (h, v)."""
        return _centers(self.lr_width, self.lr_height)
