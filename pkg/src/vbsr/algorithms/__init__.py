"""Reconstruction algorithms: observation model, GMRF prior, VB engine and baseline"""

from .bilinear import bilinear_baseline, bilinear_upsample
from .gmrf import LineProcessLayout, build_a, build_layout
from .observation import build_w, degrade, synthesize_observations
from .variational import EngineConfig, PriorConstants, SRResult, VBEngine, run

__all__ = [
    "EngineConfig",
    "LineProcessLayout",
    "PriorConstants",
    "SRResult",
    "VBEngine",
    "bilinear_baseline",
    "bilinear_upsample",
    "build_a",
    "build_layout",
    "build_w",
    "degrade",
    "run",
    "synthesize_observations",
]
