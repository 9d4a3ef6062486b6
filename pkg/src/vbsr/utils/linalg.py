"""Dense symmetric positive definite helpers built on scipy's Cholesky routines."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from vbsr.exceptions import FactorizationError

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

DEFAULT_JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class SPDFactor:
    """Cholesky factor of an SPD matrix plus the jitter that was needed."""

    factor: tuple[FloatArray, bool]
    jitter: float

    @property
    def size(self) -> int:
        return int(self.factor[0].shape[0])

    def solve(self, rhs: FloatArray) -> FloatArray:
        return np.asarray(cho_solve(self.factor, rhs), dtype=np.float64)

    def inverse(self) -> FloatArray:
        inv = self.solve(np.eye(self.size))
        return 0.5 * (inv + inv.T)

    def lower(self) -> FloatArray:
        """Lower-triangular L with L L^T equal to the (jittered) matrix."""
        return np.tril(self.factor[0])

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.factor[0]))))


def spd_factor(
    matrix: FloatArray, name: str, jitter_scale: float = DEFAULT_JITTER_SCALE
) -> SPDFactor:
    """Cholesky-factorize ``matrix``, retrying once with a diagonal jitter.

    The jitter is ``jitter_scale`` times the mean diagonal. A second failure
    raises :class:`FactorizationError` naming ``name``.
    """
    sym = 0.5 * (matrix + matrix.T)
    try:
        return SPDFactor(factor=cho_factor(sym, lower=True), jitter=0.0)
    except (LinAlgError, ValueError) as first:
        jitter = jitter_scale * float(np.mean(np.diag(sym)))
        if not np.isfinite(jitter) or jitter <= 0.0:
            raise FactorizationError(name, str(first)) from first
        logger.warning("Factorization of %s failed, retrying with jitter %.3g", name, jitter)
        try:
            return SPDFactor(
                factor=cho_factor(sym + jitter * np.eye(sym.shape[0]), lower=True),
                jitter=jitter,
            )
        except (LinAlgError, ValueError) as second:
            raise FactorizationError(name, str(second)) from second


def spd_inverse(
    matrix: FloatArray, name: str, jitter_scale: float = DEFAULT_JITTER_SCALE
) -> FloatArray:
    """Symmetric inverse of an SPD matrix via :func:`spd_factor`."""
    return spd_factor(matrix, name, jitter_scale).inverse()
