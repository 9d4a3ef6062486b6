"""
Causal Gaussian MRF prior with a line process

Every pair of 4-adjacent HR pixels i~j carries an edge indicator eta_ij. Given
eta the image is Gaussian with precision

    A(eta, rho, kappa) = rho * sum_ij eta_ij M_ij + kappa * I,

where M_ij is the difference operator (e_i - e_j)(e_i - e_j)^T. Each eta_ij is
Bernoulli with success probability logistic(lambda), so the joint prior is
normalized in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.linalg import solve_triangular

from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage
from vbsr.utils.linalg import DEFAULT_JITTER_SCALE, spd_factor
from vbsr.utils.special import log_logistic, logistic

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class LineProcessLayout:
    """Fixed enumeration of adjacent pixel pairs.

    Horizontal pairs come first in row-major order, then vertical pairs in
    row-major order. Within a pair ``i < j``.
    """

    hr_width: int
    hr_height: int
    edges: IntArray

    @property
    def n_pixels(self) -> int:
        return self.hr_width * self.hr_height

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def n_horizontal(self) -> int:
        return (self.hr_width - 1) * self.hr_height

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """Signed (N_eta, N_x) edge-pixel incidence: +1 at i, -1 at j."""
        n = self.n_edges
        rows = np.repeat(np.arange(n), 2)
        cols = self.edges.reshape(-1)
        vals = np.tile([1.0, -1.0], n)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, self.n_pixels))

    def differences(self, x: npt.ArrayLike) -> FloatArray:
        """x_i - x_j for every edge."""
        vec = np.asarray(x, dtype=np.float64)
        return vec[self.edges[:, 0]] - vec[self.edges[:, 1]]


def build_layout(hr_width: int, hr_height: int) -> LineProcessLayout:
    """Enumerate the N_eta = 2 N_x - width - height adjacent pairs of a lattice.

    Raises:
        DomainError: If the lattice has fewer than two pixels
    """
    if hr_width < 1 or hr_height < 1 or hr_width * hr_height < 2:
        raise DomainError(f"lattice {hr_width}x{hr_height} has no adjacent pixel pairs")
    index = np.arange(hr_width * hr_height, dtype=np.int64).reshape(hr_height, hr_width)
    horizontal = np.column_stack([index[:, :-1].ravel(), index[:, 1:].ravel()])
    vertical = np.column_stack([index[:-1, :].ravel(), index[1:, :].ravel()])
    edges = np.vstack([horizontal, vertical]).astype(np.int64)
    return LineProcessLayout(hr_width=hr_width, hr_height=hr_height, edges=edges)


def _check_eta(layout: LineProcessLayout, eta: npt.ArrayLike) -> FloatArray:
    vec = np.asarray(eta, dtype=np.float64).reshape(-1)
    if vec.size != layout.n_edges:
        raise DomainError(f"eta has {vec.size} entries, layout has {layout.n_edges} edges")
    if np.any(vec < 0.0) or np.any(vec > 1.0):
        raise DomainError("eta entries must lie in [0, 1]")
    return vec


def build_a(
    layout: LineProcessLayout, eta: npt.ArrayLike, rho: float, kappa: float
) -> sparse.csr_matrix:
    """Sparse precision matrix A(eta, rho, kappa).

    Fractional ``eta`` (Bernoulli means) is accepted. ``kappa = 0`` gives the
    weighted lattice Laplacian, which is only positive semidefinite.

    Raises:
        DomainError: On a length mismatch, ``rho <= 0`` or ``kappa < 0``
    """
    weights = _check_eta(layout, eta)
    if not rho > 0.0:
        raise DomainError(f"rho must be positive, got {rho}")
    if not kappa >= 0.0:
        raise DomainError(f"kappa must be non-negative, got {kappa}")
    d = layout.incidence
    laplacian = d.T @ sparse.diags(rho * weights) @ d
    return sparse.csr_matrix(laplacian + kappa * sparse.identity(layout.n_pixels, format="csr"))


def edge_trace(c: FloatArray, layout: LineProcessLayout, edge: int) -> float:
    """tr(C M_ij) = C_ii + C_jj - 2 C_ij for a single edge index."""
    if not 0 <= edge < layout.n_edges:
        raise DomainError(f"edge index {edge} outside [0, {layout.n_edges})")
    i, j = layout.edges[edge]
    return float(c[i, i] + c[j, j] - 2.0 * c[i, j])


def edge_traces(c: FloatArray, layout: LineProcessLayout) -> FloatArray:
    """:func:`edge_trace` for every edge at once."""
    i, j = layout.edges[:, 0], layout.edges[:, 1]
    diag = np.diag(c)
    return np.asarray(diag[i] + diag[j] - 2.0 * c[i, j], dtype=np.float64)


def _check_binary(layout: LineProcessLayout, eta: npt.ArrayLike) -> FloatArray:
    vec = _check_eta(layout, eta)
    if not np.all((vec == 0.0) | (vec == 1.0)):
        raise DomainError("eta must be binary here")
    return vec


def log_joint_prior(
    x: npt.ArrayLike,
    eta: npt.ArrayLike,
    lam: float,
    rho: float,
    kappa: float,
    layout: LineProcessLayout,
) -> float:
    """ln p(x, eta | lambda, rho, kappa) for a binary line process.

    Raises:
        DomainError: If a hyperparameter is non-positive or eta is not binary
    """
    if not (lam > 0.0 and rho > 0.0 and kappa > 0.0):
        raise DomainError(f"hyperparameters must be positive, got ({lam}, {rho}, {kappa})")
    vec_x = np.asarray(x, dtype=np.float64).reshape(-1)
    if vec_x.size != layout.n_pixels:
        raise DomainError(f"x has {vec_x.size} pixels, layout has {layout.n_pixels}")
    active = _check_binary(layout, eta)

    diffs = layout.differences(vec_x)
    a = build_a(layout, active, rho, kappa)
    logdet = spd_factor(a.toarray(), "A").logdet()
    return float(
        -lam * np.sum(1.0 - active)
        - 0.5 * rho * float(active @ diffs**2)
        - 0.5 * kappa * float(vec_x @ vec_x)
        + 0.5 * (logdet - layout.n_pixels * math.log(2.0 * math.pi))
        + layout.n_edges * log_logistic(lam)
    )


def sample_prior(
    lam: float,
    rho: float,
    kappa: float,
    layout: LineProcessLayout,
    seed: int | np.random.Generator | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Draw (x, eta): eta_ij ~ Bernoulli(logistic(lambda)), then x ~ N(0, A^-1).

    Raises:
        FactorizationError: If A is not positive definite (only possible at kappa = 0)
    """
    if not (rho > 0.0 and kappa >= 0.0):
        raise DomainError(f"need rho > 0 and kappa >= 0, got ({rho}, {kappa})")
    rng = np.random.default_rng(seed)
    eta = (rng.random(layout.n_edges) < logistic(lam)).astype(np.float64)
    factor = spd_factor(build_a(layout, eta, rho, kappa).toarray(), "A", DEFAULT_JITTER_SCALE)
    z = rng.standard_normal(layout.n_pixels)
    # L^-T z has covariance (L L^T)^-1
    x = solve_triangular(factor.lower().T, z, lower=False)
    return np.asarray(x, dtype=np.float64), eta


def log_det_taylor(
    layout: LineProcessLayout,
    eta: npt.ArrayLike,
    rho: float,
    kappa: float,
    eta0: npt.ArrayLike,
    rho0: float,
    kappa0: float,
) -> float:
    """First-order expansion of ln|A| in (eta, ln rho, ln kappa) around (eta0, ln rho0, ln kappa0).

    Linear in eta, so at the expansion point it reproduces ln|A(eta0, rho0, kappa0)|.
    """
    eta_vec = np.asarray(eta, dtype=np.float64).reshape(-1)
    eta0_vec = _check_eta(layout, eta0)
    factor = spd_factor(build_a(layout, eta0_vec, rho0, kappa0).toarray(), "A")
    a_inv = factor.inverse()
    traces = edge_traces(a_inv, layout)
    return float(
        factor.logdet()
        + rho0 * float((eta_vec - eta0_vec) @ traces)
        + (math.log(rho) - math.log(rho0)) * rho0 * float(eta0_vec @ traces)
        + (math.log(kappa) - math.log(kappa0)) * kappa0 * float(np.trace(a_inv))
    )


class EdgeFields(NamedTuple):
    """Line-process means rendered as images (1 = smooth maps to white)."""

    horizontal: GrayImage | None  # (width - 1) x height
    vertical: GrayImage | None  # width x (height - 1)


def edge_field_images(mu_eta: npt.ArrayLike, layout: LineProcessLayout) -> EdgeFields:
    """Split edge means into horizontal and vertical fields for export."""
    vec = _check_eta(layout, mu_eta)
    w, h = layout.hr_width, layout.hr_height
    split = layout.n_horizontal
    horizontal = (
        GrayImage.from_array(2.0 * vec[:split].reshape(h, w - 1) - 1.0) if w > 1 else None
    )
    vertical = GrayImage.from_array(2.0 * vec[split:].reshape(h - 1, w) - 1.0) if h > 1 else None
    return EdgeFields(horizontal=horizontal, vertical=vertical)
