"""
Observation model: warp, Gaussian blur and decimation as one matrix W(phi).

Each LR pixel j sees the HR lattice through an isotropic Gaussian PSF centered
at R(theta) (alpha * zeta_j - o). Normalizing that Gaussian over the infinite HR
lattice gives a product of two theta functions, and the 2-D kernel factorizes,
so every entry is F_h[j, col] * F_v[j, row] with

    F(u) = sqrt(gamma / 2 pi) exp(-gamma u^2 / 2) / theta3(u, exp(-2 pi^2 / gamma)).

HR pixels outside the image have luminance 0, so rows whose PSF leaks past the
border sum to less than one.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage
from vbsr.models.registration import (
    REGISTRATION_PRIOR_VARIANCE,
    GridSpec,
    RegistrationParams,
    registration_prior_mean,
)
from vbsr.utils.special import theta3, theta3_dq, theta3_du

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

# Lower clamp for simulated PSF precisions
MIN_SIMULATED_GAMMA = 1e-3

PhiLike = RegistrationParams | npt.ArrayLike


def _phi_vector(phi: PhiLike) -> FloatArray:
    if isinstance(phi, RegistrationParams):
        return phi.as_array()
    vec = np.asarray(phi, dtype=np.float64).reshape(-1)
    if vec.size != 4:
        raise DomainError(f"registration vector must have 4 entries, got {vec.size}")
    if not vec[3] > 0.0:
        raise DomainError(f"PSF precision gamma must be positive, got {vec[3]!r}")
    return vec


def _rotation(theta: float) -> FloatArray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def displacement(
    theta: float,
    o: npt.ArrayLike,
    zeta: npt.ArrayLike,
    xi: npt.ArrayLike,
    alpha: float,
) -> FloatArray:
    """Offset R(theta) (alpha * zeta - o) - xi between a warped LR center and an HR center.

    ``zeta`` and ``xi`` may be single points or stacks of shape (..., 2); they
    broadcast against each other.
    """
    warped = (alpha * np.asarray(zeta, dtype=np.float64) - np.asarray(o, dtype=np.float64)) @ (
        _rotation(theta).T
    )
    return np.asarray(warped - np.asarray(xi, dtype=np.float64), dtype=np.float64)


class _AxisKernel(NamedTuple):
    """Per-axis factor F and the log-derivatives needed for dW/dphi."""

    values: FloatArray  # (N_y, n) theta-normalized 1-D Gaussian
    dlog_du: FloatArray  # (N_y, n) d ln F / d u
    dlog_dgamma: FloatArray  # (N_y, n) d ln F / d gamma


def _axis_kernel(centers: FloatArray, offsets: FloatArray, gamma: float) -> _AxisKernel:
    """Evaluate F(centers_j - offsets_k) for one image axis.

    ``offsets`` differ by whole pixels, so the theta denominator is the same for
    every k and is evaluated once per row from the first offset.
    """
    q = math.exp(-2.0 * math.pi**2 / gamma)
    u = centers[:, np.newaxis] - offsets[np.newaxis, :]
    u_row = u[:, 0]
    denom = np.asarray(theta3(u_row, q), dtype=np.float64)
    denom_du = np.asarray(theta3_du(u_row, q), dtype=np.float64)
    # d theta3 / d gamma = theta3_dq * dq/dgamma, dq/dgamma = 2 pi^2 q / gamma^2
    denom_dgamma = np.asarray(theta3_dq(u_row, q), dtype=np.float64) * (
        2.0 * math.pi**2 * q / gamma**2
    )

    gauss = math.sqrt(gamma / (2.0 * math.pi)) * np.exp(-0.5 * gamma * u**2)
    values = gauss / denom[:, np.newaxis]
    dlog_du = -gamma * u - (denom_du / denom)[:, np.newaxis]
    dlog_dgamma = 0.5 / gamma - 0.5 * u**2 - (denom_dgamma / denom)[:, np.newaxis]
    return _AxisKernel(values=values, dlog_du=dlog_du, dlog_dgamma=dlog_dgamma)


class _Kernels(NamedTuple):
    horizontal: _AxisKernel
    vertical: _AxisKernel
    warped: FloatArray  # (N_y, 2) warped LR centers p_j
    lever: FloatArray  # (N_y, 2) alpha * zeta_j - o


def _kernels(phi: FloatArray, grid: GridSpec) -> _Kernels:
    theta, o_h, o_v, gamma = phi
    lever = grid.alpha * grid.lr_centers() - np.array([o_h, o_v])
    warped = lever @ _rotation(theta).T
    cols = np.arange(grid.hr_width, dtype=np.float64) - (grid.hr_width - 1) / 2.0
    rows = np.arange(grid.hr_height, dtype=np.float64) - (grid.hr_height - 1) / 2.0
    return _Kernels(
        horizontal=_axis_kernel(warped[:, 0], cols, gamma),
        vertical=_axis_kernel(warped[:, 1], rows, gamma),
        warped=warped,
        lever=lever,
    )


def _outer(vertical: FloatArray, horizontal: FloatArray) -> FloatArray:
    """Row-major (N_y, N_x) matrix from per-row vertical and horizontal factors."""
    n_y = vertical.shape[0]
    return (vertical[:, :, np.newaxis] * horizontal[:, np.newaxis, :]).reshape(n_y, -1)


def build_w(phi: PhiLike, grid: GridSpec) -> FloatArray:
    """Dense N_y x N_x transformation matrix W(phi).

    Raises:
        DomainError: If gamma <= 0
    """
    k = _kernels(_phi_vector(phi), grid)
    return _outer(k.vertical.values, k.horizontal.values)


def build_w_with_derivatives(phi: PhiLike, grid: GridSpec) -> tuple[FloatArray, FloatArray]:
    """W(phi) and its derivatives stacked as (4, N_y, N_x) in (theta, o_h, o_v, gamma) order."""
    vec = _phi_vector(phi)
    theta = float(vec[0])
    k = _kernels(vec, grid)
    h, v = k.horizontal, k.vertical
    w = _outer(v.values, h.values)

    c, s = math.cos(theta), math.sin(theta)
    # dp/dtheta = R'(theta) (alpha zeta - o)
    dp_dtheta = k.lever @ np.array([[-s, c], [-c, -s]]).T
    # dp/do_h and dp/do_v are constant over rows
    dp_doh = np.array([-c, s])
    dp_dov = np.array([-s, -c])

    def through_centers(dp_h: FloatArray | float, dp_v: FloatArray | float) -> FloatArray:
        dlog_h = h.dlog_du * np.reshape(dp_h, (-1, 1))
        dlog_v = v.dlog_du * np.reshape(dp_v, (-1, 1))
        return w * (dlog_v[:, :, np.newaxis] + dlog_h[:, np.newaxis, :]).reshape(w.shape)

    dw_dgamma = w * (
        v.dlog_dgamma[:, :, np.newaxis] + h.dlog_dgamma[:, np.newaxis, :]
    ).reshape(w.shape)

    derivatives = np.stack([
        through_centers(dp_dtheta[:, 0], dp_dtheta[:, 1]),
        through_centers(float(dp_doh[0]), float(dp_doh[1])),
        through_centers(float(dp_dov[0]), float(dp_dov[1])),
        dw_dgamma,
    ])
    return w, derivatives


def build_w_derivatives(phi: PhiLike, grid: GridSpec) -> FloatArray:
    """Analytic dW/dtheta, dW/do_h, dW/do_v, dW/dgamma stacked as (4, N_y, N_x)."""
    return build_w_with_derivatives(phi, grid)[1]


def degrade(x: GrayImage, phi: PhiLike, grid: GridSpec) -> GrayImage:
    """Noiseless LR frame W(phi) x."""
    if x.shape != (grid.hr_height, grid.hr_width):
        raise DomainError(
            f"HR image is {x.width}x{x.height}, grid expects {grid.hr_width}x{grid.hr_height}"
        )
    return GrayImage(
        width=grid.lr_width, height=grid.lr_height, data=build_w(phi, grid) @ x.data
    )


def snr_to_beta(clean_lr_stack: Sequence[GrayImage], snr_db: float) -> float:
    """Noise precision giving ``snr_db`` relative to the pooled variance of the clean frames.

    Very large ``snr_db`` saturates to ``inf``, the noise-free limit.

    Raises:
        DomainError: If the stack is empty or has zero variance, or ``snr_db``
            is so low that the precision underflows to zero
    """
    if not clean_lr_stack:
        raise DomainError("SNR conversion needs at least one clean frame")
    pooled = np.concatenate([frame.data for frame in clean_lr_stack])
    variance = float(np.var(pooled))
    if variance <= 0.0:
        raise DomainError("clean LR stack has zero variance; SNR is undefined")
    with np.errstate(over="ignore"):
        beta = float(np.power(np.float64(10.0), snr_db / 10.0) / variance)
    if beta <= 0.0:
        raise DomainError(f"SNR of {snr_db} dB gives zero noise precision")
    return beta


class Observations(NamedTuple):
    """Simulated LR stack with the ground truth that produced it."""

    frames: list[GrayImage]
    registrations: list[RegistrationParams]
    beta: float


def draw_registrations(
    n_frames: int,
    alpha: float,
    rng: np.random.Generator,
    prior_mean: FloatArray | None = None,
    prior_variance: Sequence[float] = REGISTRATION_PRIOR_VARIANCE,
) -> list[RegistrationParams]:
    """Independent draws from the diagonal Gaussian registration prior.

    Negative PSF precisions are clamped to ``MIN_SIMULATED_GAMMA``.
    """
    mean = registration_prior_mean(alpha) if prior_mean is None else np.asarray(prior_mean)
    std = np.sqrt(np.asarray(prior_variance, dtype=np.float64))
    draws = mean + std * rng.standard_normal((n_frames, 4))
    clamped = draws[:, 3] < MIN_SIMULATED_GAMMA
    if np.any(clamped):
        logger.warning(
            "Clamped %d simulated PSF precision(s) to %g", clamped.sum(), MIN_SIMULATED_GAMMA
        )
        draws[clamped, 3] = MIN_SIMULATED_GAMMA
    return [RegistrationParams.from_array(row) for row in draws]


def synthesize_observations(
    x: GrayImage,
    n_frames: int,
    snr_db: float,
    seed: int | None,
    alpha: float = 4.0,
    prior_mean: FloatArray | None = None,
    prior_variance: Sequence[float] = REGISTRATION_PRIOR_VARIANCE,
) -> Observations:
    """Draw registrations from the prior, degrade ``x`` and add white Gaussian noise.

    The noise precision is set from ``snr_db`` on the pooled clean frames.
    Identical arguments give identical outputs.

    Raises:
        DomainError: If the HR size is not divisible by ``alpha`` or ``n_frames < 1``
    """
    if n_frames < 1:
        raise DomainError(f"need at least one frame, got {n_frames}")
    grid = GridSpec.from_factor(x.width, x.height, alpha)
    rng = np.random.default_rng(seed)
    registrations = draw_registrations(n_frames, alpha, rng, prior_mean, prior_variance)
    clean = [degrade(x, phi, grid) for phi in registrations]
    beta = snr_to_beta(clean, snr_db)
    noise = rng.standard_normal((n_frames, grid.n_lr)) / math.sqrt(beta)
    frames = [
        GrayImage(width=grid.lr_width, height=grid.lr_height, data=frame.data + eps)
        for frame, eps in zip(clean, noise, strict=True)
    ]
    logger.info(
        "Synthesized %d frames of %dx%d at %.1f dB (beta=%.4g)",
        n_frames,
        grid.lr_width,
        grid.lr_height,
        snr_db,
        beta,
    )
    return Observations(frames=frames, registrations=registrations, beta=beta)
