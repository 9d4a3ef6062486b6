"""Pytest configuration and fixtures for VBSR-BENCH tests."""

import os
from pathlib import Path

import numpy as np
import pytest

from vbsr.algorithms.gmrf import LineProcessLayout, build_layout
from vbsr.models.image import GrayImage, load_pgm
from vbsr.models.registration import GridSpec, RegistrationParams

REFERENCE_IMAGE_ENV_VAR = "VBSR_REFERENCE_IMAGE"


@pytest.fixture
def project_root() -> Path:
    """Get the project root directory."""
    return Path(__file__).parent.parent


@pytest.fixture
def image_dir(project_root: Path) -> Path:
    """Bundled 40x40 test images."""
    return project_root / "data" / "images"


@pytest.fixture
def reference_image_path(image_dir: Path) -> Path:
    """Image for the protocol-scale runs; VBSR_REFERENCE_IMAGE overrides the bundled crop."""
    override = os.environ.get(REFERENCE_IMAGE_ENV_VAR)
    return Path(override) if override else image_dir / "disc.pgm"


@pytest.fixture
def blocks_image(image_dir: Path) -> GrayImage:
    return load_pgm(image_dir / "blocks.pgm")


@pytest.fixture
def tiny_grid() -> GridSpec:
    """3x3 HR lattice observed through 2x2 LR frames (alpha = 1.5)."""
    return GridSpec.from_factor(3, 3, 1.5)


@pytest.fixture
def tiny_layout(tiny_grid: GridSpec) -> LineProcessLayout:
    return build_layout(tiny_grid.hr_width, tiny_grid.hr_height)


@pytest.fixture
def tiny_truth() -> GrayImage:
    """3x3 image with a vertical step between the first and second column."""
    return GrayImage.from_array([[-0.6, 0.5, 0.6], [-0.5, 0.6, 0.5], [-0.6, 0.4, 0.6]])


@pytest.fixture
def tiny_registrations() -> list[RegistrationParams]:
    return [
        RegistrationParams(theta=0.0, o_h=0.0, o_v=0.0, gamma=2.0),
        RegistrationParams(theta=0.01, o_h=0.3, o_v=-0.2, gamma=1.8),
    ]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
