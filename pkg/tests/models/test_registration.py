"""Tests for registration parameters and the HR/LR grid"""

import numpy as np
import pytest

from vbsr.exceptions import DomainError
from vbsr.models.registration import (
    PARAMETER_NAMES,
    GridSpec,
    RegistrationParams,
    registration_prior_mean,
)


def test_prior_mean_for_default_factor():
    np.testing.assert_allclose(registration_prior_mean(4.0), [0.0, 0.0, 0.0, 0.75])


def test_registration_array_round_trip():
    phi = RegistrationParams(theta=0.01, o_h=-0.5, o_v=0.25, gamma=0.8)
    assert RegistrationParams.from_array(phi.as_array()) == phi
    assert PARAMETER_NAMES == ("theta", "o_h", "o_v", "gamma")


@pytest.mark.parametrize("gamma", [0.0, -0.1])
def test_registration_requires_positive_gamma(gamma):
    with pytest.raises(ValueError):
        RegistrationParams(gamma=gamma)


def test_grid_from_factor():
    grid = GridSpec.from_factor(40, 40, 4.0)
    assert (grid.lr_width, grid.lr_height) == (10, 10)
    assert grid.n_hr == 1600
    assert grid.n_lr == 100
    assert grid.alpha == pytest.approx(4.0)


def test_fractional_factor():
    grid = GridSpec.from_factor(3, 3, 1.5)
    assert (grid.lr_width, grid.lr_height) == (2, 2)
    assert grid.alpha == pytest.approx(1.5)


def test_grid_rejects_indivisible_size():
    with pytest.raises(DomainError, match="not divisible"):
        GridSpec.from_factor(41, 40, 4.0)


def test_grid_requires_enhancement():
    with pytest.raises(ValueError):
        GridSpec(hr_width=4, hr_height=4, lr_width=4, lr_height=4)


def test_centers_are_symmetric_about_origin():
    grid = GridSpec.from_factor(4, 2, 2.0)
    hr = grid.hr_centers()
    assert hr.shape == (8, 2)
    np.testing.assert_allclose(hr[0], [-1.5, -0.5])
    np.testing.assert_allclose(hr[-1], [1.5, 0.5])
    np.testing.assert_allclose(hr.mean(axis=0), [0.0, 0.0])
    np.testing.assert_allclose(grid.lr_centers(), [[-0.5, 0.0], [0.5, 0.0]])
