"""Bilinear interpolation baseline

Upsamples one LR frame (or the frame average) onto the HR pixel-center grid.
Both grids share the image center as origin, so HR center xi maps to LR index
xi / factor + (lr_size - 1) / 2. Samples beyond the outermost LR centers take
the nearest edge value.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Literal

import numpy as np
from scipy.ndimage import map_coordinates

from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage

logger = logging.getLogger(__name__)

BaselineMode = Literal["first", "mean"]


def _target_size(size: int, factor: float) -> int:
    target = size * factor
    if not math.isclose(target, round(target), abs_tol=1e-9):
        raise DomainError(f"size {size} times factor {factor} is not an integer")
    return round(target)


def bilinear_upsample(img: GrayImage, factor: float) -> GrayImage:
    """Interpolate ``img`` onto a grid ``factor`` times finer in each direction.

    Raises:
        DomainError: If ``factor <= 1`` or the target size is not integral
    """
    if not factor > 1.0:
        raise DomainError(f"upsampling factor must exceed 1, got {factor}")
    out_w = _target_size(img.width, factor)
    out_h = _target_size(img.height, factor)

    cols = (np.arange(out_w) - (out_w - 1) / 2.0) / factor + (img.width - 1) / 2.0
    rows = (np.arange(out_h) - (out_h - 1) / 2.0) / factor + (img.height - 1) / 2.0
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    values = map_coordinates(img.as_array(), [rr, cc], order=1, mode="nearest")
    return GrayImage.from_array(values)


def bilinear_baseline(
    frames: Sequence[GrayImage], factor: float, mode: BaselineMode = "first"
) -> GrayImage:
    """Bilinear reference estimate from an LR stack.

    ``"first"`` interpolates frame 0 only; ``"mean"`` interpolates the pixelwise
    average of all frames, ignoring their registration.
    """
    if not frames:
        raise DomainError("bilinear baseline needs at least one frame")
    if mode == "first":
        source = frames[0]
    elif mode == "mean":
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise DomainError(f"frames differ in size: {sorted(shapes)}")
        source = GrayImage(
            width=frames[0].width,
            height=frames[0].height,
            data=np.mean([f.data for f in frames], axis=0),
        )
    else:
        raise DomainError(f"unknown baseline mode {mode!r}")
    logger.debug("Bilinear baseline (%s) from %d frame(s)", mode, len(frames))
    return bilinear_upsample(source, factor)
