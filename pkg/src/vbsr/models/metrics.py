"""
Per-run metrics record and its CSV schema

One row per (image, SNR, replication) cell. The CSV column order is fixed by
``CSV_COLUMNS``; wall time is kept out of the CSV so that repeated runs with the
same seed produce byte-identical files.
"""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, Field, field_validator

from vbsr.models.registration import PARAMETER_NAMES

RunStatus = Literal["ok", "failed"]


class MetricsRow(BaseModel):
    """Outcome of one reconstruction cell"""

    image_id: str
    snr_db: float
    replication: int = Field(ge=0)
    seed: int = Field(ge=0, description="Per-run seed derived from the master seed")
    status: RunStatus = "ok"
    error: str = ""
    psnr_proposed: float = math.nan
    psnr_bilinear: float = math.nan
    isnr_bilinear: float = math.nan
    sq_err_theta: float = math.nan
    sq_err_o_h: float = math.nan
    sq_err_o_v: float = math.nan
    sq_err_gamma: float = math.nan
    iterations: int = 0
    converged: bool = False
    lambda_mean: float = math.nan
    rho_mean: float = math.nan
    kappa_mean: float = math.nan
    beta_mean: float = math.nan
    wall_time_s: float = Field(default=0.0, exclude=True)

    @field_validator("snr_db")
    @classmethod
    def _finite_snr(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"snr_db must be finite, got {v}")
        return v

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def squared_error(self, parameter: str) -> float:
        """Mean squared registration error of one parameter over the run's frames"""
        if parameter not in PARAMETER_NAMES:
            raise KeyError(parameter)
        return float(getattr(self, f"sq_err_{parameter}"))

    def to_csv_row(self) -> dict[str, str]:
        """Render with ``repr`` floats so that the text is a pure function of the values"""
        out: dict[str, str] = {}
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            if isinstance(value, bool):
                out[name] = "true" if value else "false"
            elif isinstance(value, float):
                out[name] = repr(value)
            else:
                out[name] = str(value)
        return out

    @classmethod
    def from_csv_row(cls, row: dict[str, str]) -> MetricsRow:
        data: dict[str, object] = dict(row)
        data["converged"] = row.get("converged", "false").strip().lower() == "true"
        return cls.model_validate(data)


CSV_COLUMNS: tuple[str, ...] = tuple(
    name for name, info in MetricsRow.model_fields.items() if not info.exclude
)
