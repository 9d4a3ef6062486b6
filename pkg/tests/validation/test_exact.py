"""Tests for the enumeration oracle"""

import math

import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import multivariate_normal

from vbsr.algorithms.gmrf import build_a
from vbsr.algorithms.observation import build_w, degrade
from vbsr.algorithms.variational import HyperMeans
from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage
from vbsr.models.registration import GridSpec, RegistrationParams
from vbsr.validation.exact import compare_with_oracle, exact_pm_oracle, log_evidence

HYPER = HyperMeans(lam=1.0, rho=2.0, kappa=0.2, beta=25.0)


@pytest.fixture
def frames(tiny_truth, tiny_registrations, tiny_grid, rng):
    out = []
    for phi in tiny_registrations:
        clean = degrade(tiny_truth, phi, tiny_grid).as_array()
        out.append(GrayImage.from_array(clean + 0.2 * rng.standard_normal(clean.shape)))
    return out


@pytest.fixture
def oracle(frames, tiny_registrations, tiny_grid):
    return exact_pm_oracle(frames, HYPER, tiny_registrations, tiny_grid)


def _stacked(frames, registrations, grid):
    w = np.vstack([build_w(phi, grid) for phi in registrations])
    y = np.concatenate([frame.data for frame in frames])
    return w, y


def test_enumerates_every_configuration(oracle):
    assert oracle.n_configurations == 4096
    assert oracle.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(oracle.weights >= 0.0)
    assert np.all((oracle.pm_eta >= 0.0) & (oracle.pm_eta <= 1.0))
    assert oracle.pm_x.shape == (9,)


def test_log_evidence_matches_marginal_likelihood(
    frames, tiny_registrations, tiny_grid, tiny_layout, rng
):
    """p(Y | eta) is N(Y; 0, W A^-1 W^T + I / beta) for the stacked system"""
    w, y = _stacked(frames, tiny_registrations, tiny_grid)
    for _ in range(3):
        eta = (rng.random(12) < 0.5).astype(float)
        a = build_a(tiny_layout, eta, HYPER.rho, HYPER.kappa).toarray()
        cov = w @ np.linalg.inv(a) @ w.T + np.eye(y.size) / HYPER.beta
        expected = multivariate_normal(mean=np.zeros(y.size), cov=cov).logpdf(y)
        value, mu = log_evidence(eta, tiny_layout, HYPER, w.T @ w, w.T @ y, y @ y, y.size)
        assert value == pytest.approx(expected, abs=1e-9)
        conditional = np.linalg.solve(a + HYPER.beta * w.T @ w, HYPER.beta * w.T @ y)
        np.testing.assert_allclose(mu, conditional, atol=1e-12)


def test_saturated_edges_reduce_to_a_single_gaussian(
    frames, tiny_registrations, tiny_grid, tiny_layout
):
    hyper = HyperMeans(lam=40.0, rho=2.0, kappa=0.2, beta=25.0)
    result = exact_pm_oracle(frames, hyper, tiny_registrations, tiny_grid)
    w, y = _stacked(frames, tiny_registrations, tiny_grid)
    _, mu = log_evidence(np.ones(12), tiny_layout, hyper, w.T @ w, w.T @ y, y @ y, y.size)
    np.testing.assert_allclose(result.pm_x, mu, atol=1e-9)
    np.testing.assert_allclose(result.pm_eta, 1.0, atol=1e-9)


def test_infinite_edge_penalty_keeps_only_the_all_on_configuration(
    frames, tiny_registrations, tiny_grid, tiny_layout
):
    hyper = HyperMeans(lam=math.inf, rho=2.0, kappa=0.2, beta=25.0)
    result = exact_pm_oracle(frames, hyper, tiny_registrations, tiny_grid)
    assert np.all(np.isfinite(result.weights))
    assert result.weights[-1] == pytest.approx(1.0)
    w, y = _stacked(frames, tiny_registrations, tiny_grid)
    _, mu = log_evidence(np.ones(12), tiny_layout, hyper, w.T @ w, w.T @ y, y @ y, y.size)
    np.testing.assert_allclose(result.pm_x, mu, atol=1e-12)
    np.testing.assert_allclose(result.pm_eta, 1.0)


def test_importance_sampling_agrees(oracle, frames, tiny_registrations, tiny_grid, tiny_layout):
    """Prior draws of the line process weighted by the evidence converge to the exact PM"""
    w, y = _stacked(frames, tiny_registrations, tiny_grid)
    means = np.array([
        log_evidence(eta, tiny_layout, HYPER, w.T @ w, w.T @ y, y @ y, y.size)[1]
        for eta in oracle.configurations
    ])
    rng = np.random.default_rng(17)
    n_edges = tiny_layout.n_edges
    bits = rng.random((200_000, n_edges)) < expit(HYPER.lam)
    # the enumeration puts the first edge in the most significant position
    index = bits.astype(np.int64) @ (1 << np.arange(n_edges - 1, -1, -1))
    log_w = oracle.log_evidence[index]
    weights = np.exp(log_w - log_w.max())
    weights /= weights.sum()
    np.testing.assert_allclose(weights @ bits, oracle.pm_eta, atol=0.02)
    np.testing.assert_allclose(weights @ means[index], oracle.pm_x, atol=0.02)


def test_rejects_large_lattices():
    grid = GridSpec.from_factor(4, 4, 2.0)
    frames = [GrayImage.from_array(np.zeros((2, 2)))]
    with pytest.raises(DomainError, match="too many"):
        exact_pm_oracle(frames, HYPER, [RegistrationParams(gamma=3.0)], grid)


def test_rejects_mismatched_counts(frames, tiny_registrations, tiny_grid):
    with pytest.raises(DomainError):
        exact_pm_oracle(frames, HYPER, tiny_registrations[:1], tiny_grid)


def test_compare_with_oracle(oracle):
    report = compare_with_oracle(oracle.pm_x + 0.05, oracle)
    assert report.passed
    assert report.max_abs_difference == pytest.approx(0.05)

    shifted = oracle.pm_x.copy()
    shifted[4] += 0.3
    report = compare_with_oracle(shifted, oracle)
    assert not report.passed
    assert [d.index for d in report.discrepancies] == [4]
    assert report.to_dict()["discrepancies"][0]["absolute_difference"] == pytest.approx(0.3)

    with pytest.raises(DomainError):
        compare_with_oracle(np.zeros(4), oracle)
