"""
Exact posterior mean by enumeration for tiny instances

With the hyperparameters and registrations held fixed, x given eta is Gaussian,
so p(Y | eta) has a closed form and the posterior over the 2^N_eta line-process
configurations can be normalized exactly. The result is the reference that the
variational estimate is checked against.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import logsumexp

from vbsr.algorithms.gmrf import LineProcessLayout, build_a, build_layout
from vbsr.algorithms.observation import build_w
from vbsr.algorithms.variational import HyperMeans
from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage
from vbsr.models.registration import GridSpec, RegistrationParams
from vbsr.utils.linalg import spd_factor
from vbsr.utils.special import log_logistic

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

MAX_ENUMERATED_EDGES = 16


@dataclass
class OracleResult:
    """Exact posterior means and the per-configuration weights behind them"""

    pm_x: FloatArray
    pm_eta: FloatArray
    configurations: FloatArray  # (2^N_eta, N_eta) binary
    weights: FloatArray  # normalized posterior weights
    log_evidence: FloatArray  # ln p(Y | eta) per configuration

    @property
    def n_configurations(self) -> int:
        return int(self.configurations.shape[0])


def log_evidence(
    eta: FloatArray,
    layout: LineProcessLayout,
    hyper: HyperMeans,
    gram: FloatArray,
    projection: FloatArray,
    y_y: float,
    n_obs: int,
) -> tuple[float, FloatArray]:
    """ln p(Y | eta) and the conditional posterior mean of x.

    ``gram`` is sum_l W_l^T W_l, ``projection`` is sum_l W_l^T y_l and ``n_obs``
    is L * N_y.
    """
    a = build_a(layout, eta, hyper.rho, hyper.kappa).toarray()
    a_factor = spd_factor(a, "A(eta, rho, kappa)")
    p_factor = spd_factor(a + hyper.beta * gram, "A + beta * sum_l W^T W")
    mu = p_factor.solve(hyper.beta * projection)
    # mu^T P mu = beta * mu^T (sum W^T y)
    quadratic = hyper.beta * y_y - hyper.beta * float(mu @ projection)
    value = (
        -0.5 * quadratic
        + 0.5 * a_factor.logdet()
        - 0.5 * p_factor.logdet()
        + 0.5 * n_obs * math.log(hyper.beta / (2.0 * math.pi))
    )
    return value, mu


def exact_pm_oracle(
    frames: Sequence[GrayImage],
    hyper: HyperMeans,
    registrations: Sequence[RegistrationParams],
    grid: GridSpec,
    layout: LineProcessLayout | None = None,
) -> OracleResult:
    """Enumerate every binary line process and average the conditional means.

    Raises:
        DomainError: If the lattice has more than ``MAX_ENUMERATED_EDGES`` edges
            or frames and registrations disagree in number
    """
    layout = layout or build_layout(grid.hr_width, grid.hr_height)
    if layout.n_edges > MAX_ENUMERATED_EDGES:
        raise DomainError(
            f"{layout.n_edges} edges is too many to enumerate (limit {MAX_ENUMERATED_EDGES})"
        )
    if len(frames) != len(registrations):
        raise DomainError(f"{len(frames)} frames but {len(registrations)} registrations")

    gram = np.zeros((grid.n_hr, grid.n_hr))
    projection = np.zeros(grid.n_hr)
    y_y = 0.0
    for frame, phi in zip(frames, registrations, strict=True):
        w = build_w(phi, grid)
        gram += w.T @ w
        projection += w.T @ frame.data
        y_y += float(frame.data @ frame.data)
    n_obs = len(frames) * grid.n_lr

    configurations = np.array(
        list(itertools.product((0.0, 1.0), repeat=layout.n_edges)), dtype=np.float64
    )
    log_prior_on = log_logistic(hyper.lam)
    log_prior_off = log_logistic(-hyper.lam)

    evidences = np.empty(configurations.shape[0])
    log_posterior = np.empty(configurations.shape[0])
    means = np.empty((configurations.shape[0], grid.n_hr))
    for idx, eta in enumerate(configurations):
        evidences[idx], means[idx] = log_evidence(
            eta, layout, hyper, gram, projection, y_y, n_obs
        )
        n_on = float(eta.sum())
        n_off = layout.n_edges - n_on
        # 0 * -inf is NaN; a saturated prior puts no mass on absent counts
        log_posterior[idx] = (
            evidences[idx]
            + (n_on * log_prior_on if n_on > 0 else 0.0)
            + (n_off * log_prior_off if n_off > 0 else 0.0)
        )

    weights = np.exp(log_posterior - logsumexp(log_posterior))
    logger.debug("Enumerated %d line-process configurations", configurations.shape[0])
    return OracleResult(
        pm_x=weights @ means,
        pm_eta=weights @ configurations,
        configurations=configurations,
        weights=weights,
        log_evidence=evidences,
    )


@dataclass
class PixelDiscrepancy:
    """Single pixel where the two estimates disagree"""

    index: int
    oracle_value: float
    estimate_value: float
    absolute_difference: float
    tolerance: float

    @property
    def within_tolerance(self) -> bool:
        return self.absolute_difference <= self.tolerance


@dataclass
class AgreementReport:
    """Pixelwise comparison of an estimate against the exact posterior mean"""

    passed: bool
    max_abs_difference: float
    mean_abs_difference: float
    discrepancies: list[PixelDiscrepancy]

    def __str__(self) -> str:  # pragma: no cover - formatting only
        if self.passed:
            return f"Oracle agreement PASSED (max |diff| = {self.max_abs_difference:.3g})"
        lines = [
            "Oracle agreement FAILED",
            f"Found {len(self.discrepancies)} pixels outside tolerance:",
        ]
        lines.extend(
            f"  - pixel {d.index}: oracle={d.oracle_value:.6f}, "
            f"estimate={d.estimate_value:.6f}, diff={d.absolute_difference:.2e}"
            for d in self.discrepancies
        )
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        return {
            "passed": self.passed,
            "max_abs_difference": self.max_abs_difference,
            "mean_abs_difference": self.mean_abs_difference,
            "discrepancies": [
                {
                    "index": d.index,
                    "oracle_value": d.oracle_value,
                    "estimate_value": d.estimate_value,
                    "absolute_difference": d.absolute_difference,
                    "tolerance": d.tolerance,
                }
                for d in self.discrepancies
            ],
        }


def compare_with_oracle(
    estimate: npt.ArrayLike, oracle: OracleResult, tolerance: float = 0.1
) -> AgreementReport:
    """Flag every pixel whose estimate is farther than ``tolerance`` from the exact PM."""
    est = np.asarray(estimate, dtype=np.float64).reshape(-1)
    if est.shape != oracle.pm_x.shape:
        raise DomainError(f"estimate has {est.size} pixels, oracle has {oracle.pm_x.size}")
    diff = np.abs(est - oracle.pm_x)
    discrepancies = [
        PixelDiscrepancy(
            index=int(i),
            oracle_value=float(oracle.pm_x[i]),
            estimate_value=float(est[i]),
            absolute_difference=float(diff[i]),
            tolerance=tolerance,
        )
        for i in np.flatnonzero(diff > tolerance)
    ]
    return AgreementReport(
        passed=not discrepancies,
        max_abs_difference=float(diff.max()),
        mean_abs_difference=float(diff.mean()),
        discrepancies=discrepancies,
    )
