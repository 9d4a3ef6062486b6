"""Variational Bayes posterior-mean super-resolution

The trial distribution factorizes into Bernoulli edges, a Gaussian HR image,
independent gamma hyperparameters and a Gaussian registration per frame. One
sweep advances the blocks in a fixed order:

1. edges from the state at step t,
2. the image from the new edges and everything else at t,
3. hyperparameters from the new image and edges with the registration at t,
4. registrations from the new image and edges with the hyperparameters at t.

Three first-order expansions keep every block conjugate: W(phi) around the
current registration mean, ln|A| in (eta, ln rho, ln kappa) and ln logistic(lambda)
in ln lambda.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, TextIO

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from vbsr.algorithms.gmrf import LineProcessLayout, build_a, build_layout, edge_traces
from vbsr.algorithms.observation import build_w_with_derivatives
from vbsr.exceptions import DomainError, NumericalBreakdownError
from vbsr.models.image import GrayImage
from vbsr.models.registration import (
    REGISTRATION_PRIOR_VARIANCE,
    GridSpec,
    RegistrationParams,
    registration_prior_mean,
)
from vbsr.utils.linalg import spd_factor, spd_inverse
from vbsr.utils.special import GammaParams, logistic

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

HYPER_NAMES: tuple[str, str, str, str] = ("lambda", "rho", "kappa", "beta")

_NONINFORMATIVE = GammaParams(a=1e-2, b=1e-2)


class HyperMeans(BaseModel):
    """Point values (or posterior means) of lambda, rho, kappa and beta."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(gt=0.0, alias="lambda", description="Edge penalty")
    rho: float = Field(gt=0.0, description="Smoothness")
    kappa: float = Field(gt=0.0, description="Contrast")
    beta: float = Field(gt=0.0, description="Noise precision")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.lam, self.rho, self.kappa, self.beta)


class HyperPosterior(BaseModel):
    """Gamma trial densities of the four hyperparameters."""

    model_config = ConfigDict(frozen=True)

    lam: GammaParams
    rho: GammaParams
    kappa: GammaParams
    beta: GammaParams

    def means(self) -> HyperMeans:
        return HyperMeans(
            lam=self.lam.mean, rho=self.rho.mean, kappa=self.kappa.mean, beta=self.beta.mean
        )

    @classmethod
    def point_mass(cls, values: HyperMeans) -> HyperPosterior:
        """Unit-rate gammas whose means equal ``values``; used for frozen hyperparameters."""
        lam, rho, kappa, beta = values.as_tuple()
        return cls(
            lam=GammaParams(a=lam, b=1.0),
            rho=GammaParams(a=rho, b=1.0),
            kappa=GammaParams(a=kappa, b=1.0),
            beta=GammaParams(a=beta, b=1.0),
        )


class PriorConstants(BaseModel):
    """Gamma hyperpriors and the Gaussian registration prior shared by all frames."""

    model_config = ConfigDict(frozen=True)

    lam: GammaParams = _NONINFORMATIVE
    rho: GammaParams = _NONINFORMATIVE
    kappa: GammaParams = _NONINFORMATIVE
    beta: GammaParams = _NONINFORMATIVE
    phi_mean: tuple[float, float, float, float]
    phi_variance: tuple[float, float, float, float] = REGISTRATION_PRIOR_VARIANCE

    @model_validator(mode="after")
    def _check_registration_prior(self) -> PriorConstants:
        if min(self.phi_variance) <= 0.0:
            raise ValueError(f"registration prior variances must be positive: {self.phi_variance}")
        if self.phi_mean[3] <= 0.0:
            raise ValueError(f"prior PSF precision must be positive: {self.phi_mean[3]}")
        return self

    @classmethod
    def for_alpha(
        cls, alpha: float, hyper_a0: float = 1e-2, hyper_b0: float = 1e-2
    ) -> PriorConstants:
        hyper = GammaParams(a=hyper_a0, b=hyper_b0)
        mean = registration_prior_mean(alpha)
        return cls(
            lam=hyper,
            rho=hyper,
            kappa=hyper,
            beta=hyper,
            phi_mean=(float(mean[0]), float(mean[1]), float(mean[2]), float(mean[3])),
        )

    @property
    def hyper(self) -> HyperPosterior:
        return HyperPosterior(lam=self.lam, rho=self.rho, kappa=self.kappa, beta=self.beta)

    def phi_mean_array(self) -> FloatArray:
        return np.asarray(self.phi_mean, dtype=np.float64)

    def phi_covariance(self) -> FloatArray:
        return np.diag(np.asarray(self.phi_variance, dtype=np.float64))


class EngineConfig(BaseModel):
    """Loop control for :class:`VBEngine`."""

    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(default=100, ge=1)
    image_tolerance: float = Field(default=1e-4, gt=0.0)
    registration_tolerance: float = Field(default=1e-4, gt=0.0)
    registration_scale: tuple[float, float, float, float] = REGISTRATION_PRIOR_VARIANCE
    jitter_scale: float = Field(default=1e-10, gt=0.0)
    gamma_warning_floor: float = Field(default=0.1, ge=0.0)
    fixed_hyperparameters: HyperMeans | None = None
    fixed_registration: tuple[RegistrationParams, ...] | None = None


@dataclass
class TrialState:
    """All variational parameters at one step of the fixed-point iteration."""

    mu_eta: FloatArray
    mu_x: FloatArray
    sigma_x: FloatArray
    hyper: HyperPosterior
    mu_phi: FloatArray  # (L, 4)
    sigma_phi: FloatArray  # (L, 4, 4)
    iteration: int = 0

    @property
    def n_frames(self) -> int:
        return int(self.mu_phi.shape[0])

    def copy(self) -> TrialState:
        return TrialState(
            mu_eta=self.mu_eta.copy(),
            mu_x=self.mu_x.copy(),
            sigma_x=self.sigma_x.copy(),
            hyper=self.hyper,
            mu_phi=self.mu_phi.copy(),
            sigma_phi=self.sigma_phi.copy(),
            iteration=self.iteration,
        )

    def registration(self) -> list[RegistrationParams]:
        return [RegistrationParams.from_array(row) for row in self.mu_phi]


def init_state(prior: PriorConstants, layout: LineProcessLayout, n_frames: int) -> TrialState:
    """Step-0 state: zero edges, zero image and covariance, trial densities at the priors."""
    if n_frames < 1:
        raise DomainError(f"need at least one frame, got {n_frames}")
    n_x = layout.n_pixels
    return TrialState(
        mu_eta=np.zeros(layout.n_edges),
        mu_x=np.zeros(n_x),
        sigma_x=np.zeros((n_x, n_x)),
        hyper=prior.hyper,
        mu_phi=np.tile(prior.phi_mean_array(), (n_frames, 1)),
        sigma_phi=np.tile(prior.phi_covariance(), (n_frames, 1, 1)),
        iteration=0,
    )


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-sweep change statistics and the resulting verdict."""

    image_change: float
    registration_changes: tuple[float, float, float, float]
    converged: bool


def check_convergence(
    new: TrialState, old: TrialState, config: EngineConfig | None = None
) -> ConvergenceReport:
    """Mean squared image change and scaled mean squared registration changes.

    Converged when the image change is below ``image_tolerance`` and each of the
    four registration changes is below ``registration_tolerance``.
    """
    cfg = config or EngineConfig()
    image_change = float(np.mean((new.mu_x - old.mu_x) ** 2))
    scale = np.asarray(cfg.registration_scale, dtype=np.float64)
    per_param = np.mean((new.mu_phi - old.mu_phi) ** 2, axis=0) / scale
    changes = (float(per_param[0]), float(per_param[1]), float(per_param[2]), float(per_param[3]))
    converged = image_change < cfg.image_tolerance and all(
        c < cfg.registration_tolerance for c in changes
    )
    return ConvergenceReport(
        image_change=image_change, registration_changes=changes, converged=converged
    )


class SweepRecord(BaseModel):
    """One line of the diagnostics stream."""

    iteration: int
    image_change: float
    registration_changes: list[float]
    converged: bool
    lambda_mean: float
    rho_mean: float
    kappa_mean: float
    beta_mean: float
    gamma_means: list[float]


@dataclass
class SRResult:
    """Outcome of one reconstruction; ``pm_image`` is the posterior-mean estimate."""

    pm_image: GrayImage
    posterior_std: GrayImage
    edge_means: FloatArray
    hyper_means: HyperMeans
    registration: list[RegistrationParams]
    registration_covariances: FloatArray
    iterations: int
    converged: bool
    history: list[SweepRecord] = field(default_factory=list)
    wall_time: float = 0.0


class FrameOperator(NamedTuple):
    w: FloatArray  # (N_y, N_x)
    dw: FloatArray  # (4, N_y, N_x)


class FrameMoments(NamedTuple):
    """Image-moment contractions of one frame's operator, shared by two update blocks."""

    trace_ww: float  # tr C_x W^T W
    y_w_mu: float  # y^T W mu_x
    y_y: float  # y^T y
    c_first: FloatArray  # (4,) linear registration term
    c_second: FloatArray  # (4, 4) quadratic registration term


def _psd_root(matrix: FloatArray) -> FloatArray:
    """R with R R^T = matrix for a symmetric positive semidefinite matrix."""
    values, vectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return np.asarray(vectors * np.sqrt(np.clip(values, 0.0, None)), dtype=np.float64)


class VBEngine:
    """Fixed-point iteration for one LR stack."""

    def __init__(
        self,
        frames: Sequence[GrayImage],
        grid: GridSpec,
        prior: PriorConstants | None = None,
        config: EngineConfig | None = None,
    ) -> None:
        if not frames:
            raise DomainError("reconstruction needs at least one LR frame")
        for idx, frame in enumerate(frames):
            if frame.shape != (grid.lr_height, grid.lr_width):
                raise DomainError(
                    f"frame {idx} is {frame.width}x{frame.height}, "
                    f"grid expects {grid.lr_width}x{grid.lr_height}"
                )
        self.grid = grid
        self.prior = prior or PriorConstants.for_alpha(grid.alpha)
        self.config = config or EngineConfig()
        self.layout = build_layout(grid.hr_width, grid.hr_height)
        self.observations = np.vstack([frame.data for frame in frames])
        if (
            self.config.fixed_registration is not None
            and len(self.config.fixed_registration) != len(frames)
        ):
            n_fixed = len(self.config.fixed_registration)
            raise DomainError(f"{n_fixed} fixed registrations for {len(frames)} frames")
        self._operator_key: bytes | None = None
        self._operators: list[FrameOperator] = []

    @property
    def n_frames(self) -> int:
        return int(self.observations.shape[0])

    @property
    def hyper_frozen(self) -> bool:
        return self.config.fixed_hyperparameters is not None

    @property
    def registration_frozen(self) -> bool:
        return self.config.fixed_registration is not None

    def initial_state(self) -> TrialState:
        state = init_state(self.prior, self.layout, self.n_frames)
        if self.config.fixed_hyperparameters is not None:
            state.hyper = HyperPosterior.point_mass(self.config.fixed_hyperparameters)
        if self.config.fixed_registration is not None:
            state.mu_phi = np.vstack([phi.as_array() for phi in self.config.fixed_registration])
            state.sigma_phi = np.zeros_like(state.sigma_phi)
        return state

    # ------------------------------------------------------------------ operators
    def operators(self, mu_phi: FloatArray) -> list[FrameOperator]:
        """W and dW/dphi at the registration means, rebuilt only when they change."""
        key = mu_phi.tobytes()
        if key == self._operator_key:
            return self._operators
        gammas = mu_phi[:, 3]
        for idx, gamma in enumerate(gammas):
            if gamma <= 0.0:
                raise NumericalBreakdownError(f"mu_gamma[{idx}]", float(gamma))
            if gamma < self.config.gamma_warning_floor:
                logger.warning(
                    "PSF precision mean of frame %d dropped to %.4g (floor %.3g)",
                    idx,
                    gamma,
                    self.config.gamma_warning_floor,
                )
        self._operators = [
            FrameOperator(*build_w_with_derivatives(phi, self.grid)) for phi in mu_phi
        ]
        self._operator_key = key
        return self._operators

    def _precision(self, mu_eta: FloatArray, rho: float, kappa: float) -> FloatArray:
        return np.asarray(build_a(self.layout, mu_eta, rho, kappa).toarray(), dtype=np.float64)

    # ------------------------------------------------------------------ update blocks
    def update_eta(self, state: TrialState) -> FloatArray:
        """New edge means sigma(mu_lambda + mu_rho / 2 * tr[(A^-1 - C_x) M_ij])."""
        means = state.hyper.means()
        a_inv = spd_inverse(
            self._precision(state.mu_eta, means.rho, means.kappa),
            "A(mu_eta, mu_rho, mu_kappa)",
            self.config.jitter_scale,
        )
        moment_traces = self.layout.differences(state.mu_x) ** 2 + edge_traces(
            state.sigma_x, self.layout
        )
        c_eta = edge_traces(a_inv, self.layout) - moment_traces
        return np.asarray(logistic(means.lam + 0.5 * means.rho * c_eta), dtype=np.float64)

    def update_x(self, state: TrialState, mu_eta: FloatArray) -> tuple[FloatArray, FloatArray]:
        """New image mean and covariance from the advanced edges and the step-t rest."""
        means = state.hyper.means()
        system = self._precision(mu_eta, means.rho, means.kappa)
        rhs = np.zeros(self.layout.n_pixels)
        for op, sigma_phi, y in zip(
            self.operators(state.mu_phi), state.sigma_phi, self.observations, strict=True
        ):
            gram = op.w.T @ op.w
            if np.any(sigma_phi):
                # sum_kk' S_kk' W'_k^T W'_k' = G^T G with G_m = sum_k R_km W'_k, R R^T = S
                g = np.einsum("km,kyx->myx", _psd_root(sigma_phi), op.dw).reshape(
                    -1, self.layout.n_pixels
                )
                gram += g.T @ g
            system += means.beta * gram
            rhs += op.w.T @ y
        factor = spd_factor(system, "A + mu_beta * sum_l C'_W", self.config.jitter_scale)
        sigma_x = factor.inverse()
        mu_x = factor.solve(means.beta * rhs)
        return mu_x, sigma_x

    def frame_moments(
        self, state: TrialState, mu_x: FloatArray, sigma_x: FloatArray
    ) -> list[FrameMoments]:
        """Contractions of C_x = mu mu^T + Sigma with W and W' at the step-t registration."""
        moments: list[FrameMoments] = []
        for op, y in zip(self.operators(state.mu_phi), self.observations, strict=True):
            w_mu = op.w @ mu_x
            w_sigma = op.w @ sigma_x
            trace_ww = float(w_mu @ w_mu + np.sum(w_sigma * op.w))
            d_mu = op.dw @ mu_x
            c_first = d_mu @ w_mu + np.einsum("yx,kyx->k", w_sigma, op.dw) - d_mu @ y
            d_sigma = np.matmul(op.dw, sigma_x)
            c_second = d_mu @ d_mu.T + np.einsum("kyx,jyx->kj", d_sigma, op.dw)
            moments.append(
                FrameMoments(
                    trace_ww=trace_ww,
                    y_w_mu=float(y @ w_mu),
                    y_y=float(y @ y),
                    c_first=np.asarray(c_first, dtype=np.float64),
                    c_second=0.5 * (c_second + c_second.T),
                )
            )
        return moments

    def update_hyper(
        self,
        state: TrialState,
        mu_eta: FloatArray,
        mu_x: FloatArray,
        sigma_x: FloatArray,
        moments: list[FrameMoments] | None = None,
    ) -> HyperPosterior:
        """New gamma parameters for lambda, rho, kappa and beta.

        Raises:
            NumericalBreakdownError: If any rate parameter is not positive
        """
        if moments is None:
            moments = self.frame_moments(state, mu_x, sigma_x)
        p = self.prior
        means = state.hyper.means()
        n_eta = self.layout.n_edges
        n_y = self.grid.n_lr

        a_inv = spd_inverse(
            self._precision(mu_eta, means.rho, means.kappa),
            "A(mu_eta_next, mu_rho, mu_kappa)",
            self.config.jitter_scale,
        )
        inverse_traces = edge_traces(a_inv, self.layout)
        moment_traces = self.layout.differences(mu_x) ** 2 + edge_traces(sigma_x, self.layout)

        a_lam = p.lam.a + n_eta * means.lam * logistic(-means.lam)
        b_lam = p.lam.b + float(np.sum(1.0 - mu_eta))
        a_rho = p.rho.a + 0.5 * means.rho * float(mu_eta @ inverse_traces)
        b_rho = p.rho.b + 0.5 * float(mu_eta @ moment_traces)
        a_kappa = p.kappa.a + 0.5 * means.kappa * float(np.trace(a_inv))
        b_kappa = p.kappa.b + 0.5 * float(mu_x @ mu_x + np.trace(sigma_x))
        a_beta = p.beta.a + 0.5 * self.n_frames * n_y
        residual = 0.0
        for m, sigma_phi in zip(moments, state.sigma_phi, strict=True):
            trace_cw = m.trace_ww + float(np.sum(sigma_phi * m.c_second))
            residual += trace_cw - 2.0 * m.y_w_mu + m.y_y
        b_beta = p.beta.b + 0.5 * residual

        for name, value in zip(HYPER_NAMES, (b_lam, b_rho, b_kappa, b_beta), strict=True):
            if not value > 0.0:
                raise NumericalBreakdownError(f"b_{name}", value)
        return HyperPosterior(
            lam=GammaParams(a=a_lam, b=b_lam),
            rho=GammaParams(a=a_rho, b=b_rho),
            kappa=GammaParams(a=a_kappa, b=b_kappa),
            beta=GammaParams(a=a_beta, b=b_beta),
        )

    def update_phi(
        self,
        state: TrialState,
        mu_x: FloatArray,
        sigma_x: FloatArray,
        moments: list[FrameMoments] | None = None,
        beta_mean: float | None = None,
    ) -> tuple[FloatArray, FloatArray]:
        """New registration means and covariances; ``beta_mean`` defaults to mu_beta at step t."""
        if moments is None:
            moments = self.frame_moments(state, mu_x, sigma_x)
        beta = state.hyper.beta.mean if beta_mean is None else beta_mean
        prior_precision = np.diag(1.0 / np.asarray(self.prior.phi_variance))
        prior_term = prior_precision @ self.prior.phi_mean_array()
        mu_phi = np.empty_like(state.mu_phi)
        sigma_phi = np.empty_like(state.sigma_phi)
        for idx, (m, mu_prev) in enumerate(zip(moments, state.mu_phi, strict=True)):
            factor = spd_factor(
                prior_precision + beta * m.c_second,
                f"Sigma_phi[{idx}]^-1",
                self.config.jitter_scale,
            )
            sigma_phi[idx] = factor.inverse()
            mu_phi[idx] = factor.solve(prior_term + beta * (m.c_second @ mu_prev - m.c_first))
        return mu_phi, sigma_phi

    # ------------------------------------------------------------------ loop
    def sweep(self, state: TrialState) -> TrialState:
        """One pass over the four blocks; ``state`` is left untouched."""
        mu_eta = self.update_eta(state)
        mu_x, sigma_x = self.update_x(state, mu_eta)
        needs_moments = not (self.hyper_frozen and self.registration_frozen)
        moments = self.frame_moments(state, mu_x, sigma_x) if needs_moments else None
        hyper = (
            state.hyper
            if self.hyper_frozen
            else self.update_hyper(state, mu_eta, mu_x, sigma_x, moments)
        )
        if self.registration_frozen:
            mu_phi, sigma_phi = state.mu_phi.copy(), state.sigma_phi.copy()
        else:
            mu_phi, sigma_phi = self.update_phi(state, mu_x, sigma_x, moments)
        return TrialState(
            mu_eta=mu_eta,
            mu_x=mu_x,
            sigma_x=sigma_x,
            hyper=hyper,
            mu_phi=mu_phi,
            sigma_phi=sigma_phi,
            iteration=state.iteration + 1,
        )

    def _record(self, state: TrialState, report: ConvergenceReport) -> SweepRecord:
        lam, rho, kappa, beta = state.hyper.means().as_tuple()
        return SweepRecord(
            iteration=state.iteration,
            image_change=report.image_change,
            registration_changes=list(report.registration_changes),
            converged=report.converged,
            lambda_mean=lam,
            rho_mean=rho,
            kappa_mean=kappa,
            beta_mean=beta,
            gamma_means=[float(g) for g in state.mu_phi[:, 3]],
        )

    def run(self, diagnostics: Path | TextIO | None = None) -> SRResult:
        """Iterate sweeps until convergence or ``max_iterations``.

        Hitting the cap is reported through ``SRResult.converged`` and is not an error.
        """
        start = time.perf_counter()
        handle: TextIO | None
        if isinstance(diagnostics, Path):
            diagnostics.parent.mkdir(parents=True, exist_ok=True)
            handle = diagnostics.open("w", encoding="utf-8")
        else:
            handle = diagnostics
        try:
            state = self.initial_state()
            history: list[SweepRecord] = []
            converged = False
            while state.iteration < self.config.max_iterations:
                new_state = self.sweep(state)
                report = check_convergence(new_state, state, self.config)
                record = self._record(new_state, report)
                history.append(record)
                if handle is not None:
                    handle.write(record.model_dump_json() + "\n")
                logger.debug(
                    "Sweep %d: image change %.3e, registration changes %s",
                    record.iteration,
                    report.image_change,
                    ", ".join(f"{c:.3e}" for c in report.registration_changes),
                )
                state = new_state
                if report.converged:
                    converged = True
                    break
        finally:
            if isinstance(diagnostics, Path) and handle is not None:
                handle.close()

        if converged:
            logger.info("Converged after %d sweeps", state.iteration)
        else:
            logger.info("Stopped at the iteration cap (%d sweeps) unconverged", state.iteration)
        return self._result(state, history, converged, time.perf_counter() - start)

    def _result(
        self, state: TrialState, history: list[SweepRecord], converged: bool, wall_time: float
    ) -> SRResult:
        shape = (self.grid.hr_height, self.grid.hr_width)
        std = np.sqrt(np.clip(np.diag(state.sigma_x), 0.0, None))
        return SRResult(
            pm_image=GrayImage.from_array(state.mu_x.reshape(shape)),
            posterior_std=GrayImage.from_array(std.reshape(shape)),
            edge_means=state.mu_eta.copy(),
            hyper_means=state.hyper.means(),
            registration=state.registration(),
            registration_covariances=state.sigma_phi.copy(),
            iterations=state.iteration,
            converged=converged,
            history=history,
            wall_time=wall_time,
        )


def run(
    frames: Sequence[GrayImage],
    alpha: float,
    prior: PriorConstants | None = None,
    config: EngineConfig | None = None,
    diagnostics: Path | TextIO | None = None,
) -> SRResult:
    """Reconstruct the posterior-mean HR image from an LR stack enhanced by ``alpha``."""
    if not frames:
        raise DomainError("reconstruction needs at least one LR frame")
    first = frames[0]
    hr_w, hr_h = first.width * alpha, first.height * alpha
    if not (math.isclose(hr_w, round(hr_w)) and math.isclose(hr_h, round(hr_h))):
        raise DomainError(f"LR size {first.width}x{first.height} times {alpha} is not integral")
    grid = GridSpec(
        hr_width=round(hr_w), hr_height=round(hr_h), lr_width=first.width, lr_height=first.height
    )
    return VBEngine(frames, grid, prior=prior, config=config).run(diagnostics)
