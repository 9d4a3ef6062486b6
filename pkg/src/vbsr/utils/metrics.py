"""Image-quality and registration-error metrics shared by the harness and the CLI."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np

from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage
from vbsr.models.registration import RegistrationParams

# Luminance spans [-1, +1], so the peak-to-peak range is 2
PEAK_SQUARED = 4.0


def mean_squared_error(estimate: GrayImage, truth: GrayImage) -> float:
    """Per-pixel mean squared error between two images of equal size."""
    if estimate.shape != truth.shape:
        raise DomainError(
            f"image size mismatch: estimate {estimate.width}x{estimate.height}, "
            f"truth {truth.width}x{truth.height}"
        )
    diff = estimate.data - truth.data
    return float(diff @ diff) / truth.n_pixels


def psnr(estimate: GrayImage, truth: GrayImage) -> float:
    """Peak signal-to-noise ratio in dB with a peak of 2 luminance units.

    Identical images return ``math.inf``.
    """
    mse = mean_squared_error(estimate, truth)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK_SQUARED / mse)


def isnr(proposed_psnr: float, baseline_psnr: float) -> float:
    """Improvement of one estimator's PSNR over another's on the same truth."""
    if not (math.isfinite(proposed_psnr) and math.isfinite(baseline_psnr)):
        raise DomainError("ISNR needs finite PSNR values")
    return proposed_psnr - baseline_psnr


def rmse(squared_errors: Iterable[float]) -> float:
    """Root of the mean of already-squared errors; NaN for an empty input."""
    values = np.fromiter(squared_errors, dtype=np.float64)
    if values.size == 0:
        return math.nan
    return math.sqrt(float(values.mean()))


def registration_squared_errors(
    estimate: Sequence[RegistrationParams], truth: Sequence[RegistrationParams]
) -> tuple[float, float, float, float]:
    """Per-parameter squared registration error, averaged over frames.

    Raises:
        DomainError: If the frame counts differ or are zero
    """
    if len(estimate) != len(truth) or not truth:
        raise DomainError(
            f"need matching non-empty registrations, got {len(estimate)} and {len(truth)}"
        )
    est = np.vstack([phi.as_array() for phi in estimate])
    ref = np.vstack([phi.as_array() for phi in truth])
    sq = np.mean((est - ref) ** 2, axis=0)
    return (float(sq[0]), float(sq[1]), float(sq[2]), float(sq[3]))
