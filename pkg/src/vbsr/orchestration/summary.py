"""Aggregate per-run metrics into the experiment tables"""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from vbsr.exceptions import DomainError
from vbsr.models.metrics import MetricsRow
from vbsr.models.registration import PARAMETER_NAMES
from vbsr.utils.metrics import rmse

HYPER_COLUMNS = ("lambda_mean", "rho_mean", "kappa_mean", "beta_mean")


@dataclass(frozen=True)
class SampleStats:
    """Mean and sample standard deviation; a single sample reports std 0."""

    values: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def single_sample(self) -> bool:
        return self.n == 1

    @property
    def mean(self) -> float:
        return statistics.fmean(self.values) if self.values else math.nan

    @property
    def std(self) -> float:
        if not self.values:
            return math.nan
        return statistics.stdev(self.values) if self.n > 1 else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "std": self.std, "n": self.n}

    def __str__(self) -> str:
        flag = " (n=1)" if self.single_sample else ""
        return f"{self.mean:.2f} ± {self.std:.2f}{flag}"


def _stats(values: Sequence[float]) -> SampleStats:
    return SampleStats(tuple(v for v in values if math.isfinite(v)))


@dataclass
class CellSummary:
    image_id: str
    snr_db: float
    runs: int
    failures: int
    psnr_proposed: SampleStats
    psnr_bilinear: SampleStats
    isnr_bilinear: SampleStats
    hyper: dict[str, SampleStats] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "image_id": self.image_id,
            "snr_db": self.snr_db,
            "runs": self.runs,
            "failures": self.failures,
            "psnr_proposed": self.psnr_proposed.to_dict(),
            "psnr_bilinear": self.psnr_bilinear.to_dict(),
            "isnr_bilinear": self.isnr_bilinear.to_dict(),
            "hyper": {name: stats.to_dict() for name, stats in self.hyper.items()},
        }


@dataclass(frozen=True)
class RegistrationSummary:
    """RMSE of one registration parameter at one SNR, pooled over images and runs."""

    parameter: str
    snr_db: float
    runs: int
    rmse: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "parameter": self.parameter,
            "snr_db": self.snr_db,
            "runs": self.runs,
            "rmse": self.rmse,
        }


@dataclass
class ExperimentSummary:
    cells: list[CellSummary]
    registration: list[RegistrationSummary]

    @property
    def failures(self) -> int:
        return sum(cell.failures for cell in self.cells)

    def rmse(self, parameter: str, snr_db: float) -> float:
        for entry in self.registration:
            if entry.parameter == parameter and entry.snr_db == snr_db:
                return entry.rmse
        raise KeyError((parameter, snr_db))

    def to_dict(self) -> dict[str, Any]:
        return {
            "failures": self.failures,
            "cells": [cell.to_dict() for cell in self.cells],
            "registration": [entry.to_dict() for entry in self.registration],
        }

    def generate_report(self) -> str:
        lines = ["Reconstruction Summary", "=" * 50]
        for cell in self.cells:
            lines.extend((
                f"\n{cell.image_id} @ {cell.snr_db:g} dB ({cell.runs} runs, "
                f"{cell.failures} failed)",
                f"  PSNR proposed: {cell.psnr_proposed}",
                f"  PSNR bilinear: {cell.psnr_bilinear}",
                f"  ISNR:          {cell.isnr_bilinear}",
            ))
        lines.extend(("\nRegistration RMSE", "-" * 30))
        for entry in self.registration:
            lines.append(
                f"{entry.parameter:>6} @ {entry.snr_db:g} dB: {entry.rmse:.4f} ({entry.runs} runs)"
            )
        return "\n".join(lines)


def summarize(rows: Sequence[MetricsRow]) -> ExperimentSummary:
    """Per-(image, SNR) PSNR/ISNR statistics and per-(parameter, SNR) pooled RMSE.

    Failed rows are counted but excluded from every statistic.

    Raises:
        DomainError: If ``rows`` is empty
    """
    if not rows:
        raise DomainError("cannot summarize an empty metrics table")

    by_cell: dict[tuple[str, float], list[MetricsRow]] = defaultdict(list)
    by_snr: dict[float, list[MetricsRow]] = defaultdict(list)
    for row in rows:
        by_cell[(row.image_id, row.snr_db)].append(row)
        if row.ok:
            by_snr[row.snr_db].append(row)

    cells: list[CellSummary] = []
    for (image_id, snr_db), group in sorted(by_cell.items()):
        ok = [r for r in group if r.ok]
        cells.append(
            CellSummary(
                image_id=image_id,
                snr_db=snr_db,
                runs=len(group),
                failures=len(group) - len(ok),
                psnr_proposed=_stats([r.psnr_proposed for r in ok]),
                psnr_bilinear=_stats([r.psnr_bilinear for r in ok]),
                isnr_bilinear=_stats([r.isnr_bilinear for r in ok]),
                hyper={name: _stats([getattr(r, name) for r in ok]) for name in HYPER_COLUMNS},
            )
        )

    registration: list[RegistrationSummary] = []
    for snr_db in sorted(by_snr):
        group = by_snr[snr_db]
        for name in PARAMETER_NAMES:
            errors = [r.squared_error(name) for r in group]
            errors = [e for e in errors if math.isfinite(e)]
            pooled = rmse(errors)
            registration.append(
                RegistrationSummary(parameter=name, snr_db=snr_db, runs=len(errors), rmse=pooled)
            )
    return ExperimentSummary(cells=cells, registration=registration)
