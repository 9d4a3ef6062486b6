"""Tests for PSNR, ISNR and RMSE"""

import math

import numpy as np
import pytest

from vbsr.exceptions import DomainError
from vbsr.models.image import GrayImage
from vbsr.models.registration import RegistrationParams
from vbsr.utils.metrics import (
    isnr,
    mean_squared_error,
    psnr,
    registration_squared_errors,
    rmse,
)


def _pair(mse: float) -> tuple[GrayImage, GrayImage]:
    truth = GrayImage.from_array(np.zeros((4, 4)))
    estimate = GrayImage.from_array(np.full((4, 4), math.sqrt(mse)))
    return estimate, truth


@pytest.mark.parametrize(("mse", "expected"), [(4.0, 0.0), (0.04, 20.0), (0.0004, 40.0)])
def test_psnr_values(mse, expected):
    estimate, truth = _pair(mse)
    assert mean_squared_error(estimate, truth) == pytest.approx(mse)
    assert psnr(estimate, truth) == pytest.approx(expected, abs=1e-9)


def test_psnr_identical_images_is_infinite():
    truth = GrayImage.from_array(np.eye(3))
    assert psnr(truth, truth) == math.inf


def test_psnr_size_mismatch():
    with pytest.raises(DomainError):
        psnr(GrayImage.from_array(np.zeros((2, 2))), GrayImage.from_array(np.zeros((3, 3))))


def test_isnr():
    assert isnr(30.0, 30.0) == 0.0
    assert isnr(32.13, 23.95) == pytest.approx(8.18)
    assert isnr(25.0, 21.0) == -isnr(21.0, 25.0)


def test_isnr_requires_finite_inputs():
    with pytest.raises(DomainError):
        isnr(math.inf, 20.0)


def test_rmse():
    assert rmse([0.01, 0.03]) == pytest.approx(math.sqrt(0.02))
    assert math.isnan(rmse([]))


def test_registration_squared_errors_average_over_frames():
    truth = [
        RegistrationParams(theta=0.0, o_h=0.0, o_v=0.0, gamma=0.75),
        RegistrationParams(theta=0.01, o_h=1.0, o_v=-1.0, gamma=0.75),
    ]
    estimate = [
        RegistrationParams(theta=0.002, o_h=0.1, o_v=0.0, gamma=0.75),
        RegistrationParams(theta=0.01, o_h=1.3, o_v=-1.0, gamma=0.85),
    ]
    errors = registration_squared_errors(estimate, truth)
    assert errors == pytest.approx((2e-6, 0.05, 0.0, 0.005))
    with pytest.raises(DomainError):
        registration_squared_errors(estimate[:1], truth)
    with pytest.raises(DomainError):
        registration_squared_errors([], [])
