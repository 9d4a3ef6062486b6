"""Special functions and distribution moments shared by every other module.

The Jacobi theta function is evaluated from its q-series for small nomes. For
nomes close to 1 (sharp PSFs, q = exp(-2 pi^2 / gamma)) the series cancels badly
near u = 1/2, so the equivalent Gaussian lattice sum is used instead.
"""

from __future__ import annotations

import math
from typing import overload

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit, log_expit

from vbsr.exceptions import DomainError

FloatArray = npt.NDArray[np.float64]

# Series terms are dropped once their magnitude falls below the double-precision floor
SERIES_TOLERANCE = 1e-16

# Above this nome the lattice sum needs fewer terms than the q-series
DUAL_NOME_THRESHOLD = math.exp(-math.pi)


class ThetaArg(BaseModel):
    """Argument pair of the theta function (u in HR-pixel units, q the nome)."""

    model_config = ConfigDict(frozen=True)

    u: float
    q: float = Field(ge=0.0, lt=1.0)

    def evaluate(self) -> float:
        return float(theta3(self.u, self.q))


class GammaParams(BaseModel):
    """Shape/rate parameters of a gamma density."""

    model_config = ConfigDict(frozen=True)

    a: float = Field(gt=0.0, description="Shape")
    b: float = Field(gt=0.0, description="Rate")

    @property
    def mean(self) -> float:
        return gamma_mean(self)


def gamma_mean(p: GammaParams) -> float:
    """Mean a/b of a gamma density."""
    return p.a / p.b


@overload
def logistic(x: float) -> float: ...
@overload
def logistic(x: FloatArray) -> FloatArray: ...
def logistic(x: float | FloatArray) -> float | FloatArray:
    """Logistic sigmoid 1 / (1 + exp(-x)), overflow-free for any finite x."""
    out = expit(x)
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=np.float64)


@overload
def log_logistic(x: float) -> float: ...
@overload
def log_logistic(x: FloatArray) -> FloatArray: ...
def log_logistic(x: float | FloatArray) -> float | FloatArray:
    """Natural log of the logistic sigmoid."""
    out = log_expit(x)
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=np.float64)


def _check_nome(q: float) -> None:
    if not (0.0 <= q < 1.0) or math.isnan(q):
        raise DomainError(f"theta nome must satisfy 0 <= q < 1, got {q!r}")


def _series_orders(q: float, power_offset: int = 0, weight_power: int = 0) -> npt.NDArray[np.int64]:
    """Orders n >= 1 whose term 2 n^w q^(n^2 - offset) is above the tolerance."""
    if q == 0.0:
        # Only a q^0 term can survive, which needs n^2 == offset
        return np.array([1], dtype=np.int64) if power_offset == 1 else np.zeros(0, dtype=np.int64)
    log_q = math.log(q)
    orders: list[int] = []
    n = 1
    while True:
        magnitude = 2.0 * n**weight_power * math.exp((n * n - power_offset) * log_q)
        if magnitude < SERIES_TOLERANCE:
            break
        orders.append(n)
        n += 1
    return np.asarray(orders, dtype=np.int64)


def _precision_of_nome(q: float) -> float:
    """PSF precision gamma with q = exp(-2 pi^2 / gamma)."""
    return -2.0 * math.pi**2 / math.log(q)


def _lattice_terms(u_arr: FloatArray, q: float) -> tuple[float, FloatArray, FloatArray]:
    """Gaussian lattice terms of the dual representation.

    theta3(u, q) = sqrt(gamma / 2 pi) * sum_n exp(-gamma (u - n)^2 / 2), an identity
    (Poisson summation) whose terms are all positive.
    """
    gamma = _precision_of_nome(q)
    reduced = u_arr - np.round(u_arr)
    reach = math.ceil(math.sqrt(-2.0 * math.log(SERIES_TOLERANCE) / gamma)) + 1
    offsets = reduced[..., np.newaxis] - np.arange(-reach, reach + 1, dtype=np.float64)
    terms = math.sqrt(gamma / (2.0 * math.pi)) * np.exp(-0.5 * gamma * offsets**2)
    return gamma, offsets, terms


def _as_result(values: FloatArray, scalar: bool) -> float | FloatArray:
    return float(values) if scalar else values


def theta3(u: npt.ArrayLike, q: float) -> float | FloatArray:
    """Jacobi theta function 1 + 2 sum_n q^(n^2) cos(2 n pi u).

    Parameters
    ----------
    u : array_like
        Argument; the function is periodic in u with period 1.
    q : float
        Nome, 0 <= q < 1.

    Returns
    -------
    float or ndarray
        Same shape as ``u``.
    """
    _check_nome(q)
    u_arr = np.asarray(u, dtype=np.float64)
    if q > DUAL_NOME_THRESHOLD:
        _, _, terms = _lattice_terms(u_arr, q)
        return _as_result(np.asarray(terms.sum(axis=-1), dtype=np.float64), u_arr.ndim == 0)
    orders = _series_orders(q)
    if orders.size == 0:
        return _as_result(np.ones_like(u_arr), u_arr.ndim == 0)
    coeffs = np.exp(orders.astype(np.float64) ** 2 * math.log(q))
    phases = 2.0 * np.pi * np.multiply.outer(u_arr, orders)
    values = 1.0 + 2.0 * (np.cos(phases) @ coeffs)
    return _as_result(np.asarray(values, dtype=np.float64), u_arr.ndim == 0)


def theta3_du(u: npt.ArrayLike, q: float) -> float | FloatArray:
    """Derivative of :func:`theta3` with respect to ``u``."""
    _check_nome(q)
    u_arr = np.asarray(u, dtype=np.float64)
    if q > DUAL_NOME_THRESHOLD:
        gamma, offsets, terms = _lattice_terms(u_arr, q)
        values = -gamma * (offsets * terms).sum(axis=-1)
        return _as_result(np.asarray(values, dtype=np.float64), u_arr.ndim == 0)
    orders = _series_orders(q, weight_power=1)
    if orders.size == 0:
        return _as_result(np.zeros_like(u_arr), u_arr.ndim == 0)
    n = orders.astype(np.float64)
    coeffs = n * np.exp(n**2 * math.log(q))
    phases = 2.0 * np.pi * np.multiply.outer(u_arr, orders)
    values = -4.0 * np.pi * (np.sin(phases) @ coeffs)
    return _as_result(np.asarray(values, dtype=np.float64), u_arr.ndim == 0)


def theta3_dq(u: npt.ArrayLike, q: float) -> float | FloatArray:
    """Derivative of :func:`theta3` with respect to the nome ``q``."""
    _check_nome(q)
    u_arr = np.asarray(u, dtype=np.float64)
    if q > DUAL_NOME_THRESHOLD:
        gamma, offsets, terms = _lattice_terms(u_arr, q)
        d_gamma = ((0.5 / gamma - 0.5 * offsets**2) * terms).sum(axis=-1)
        # d gamma / d q = gamma^2 / (2 pi^2 q)
        values = d_gamma * gamma**2 / (2.0 * math.pi**2 * q)
        return _as_result(np.asarray(values, dtype=np.float64), u_arr.ndim == 0)
    orders = _series_orders(q, power_offset=1, weight_power=2)
    if orders.size == 0:
        return _as_result(np.zeros_like(u_arr), u_arr.ndim == 0)
    n = orders.astype(np.float64)
    coeffs = 2.0 * n**2 * (np.exp((n**2 - 1.0) * math.log(q)) if q > 0.0 else np.ones_like(n))
    phases = 2.0 * np.pi * np.multiply.outer(u_arr, orders)
    values = np.cos(phases) @ coeffs
    return _as_result(np.asarray(values, dtype=np.float64), u_arr.ndim == 0)
