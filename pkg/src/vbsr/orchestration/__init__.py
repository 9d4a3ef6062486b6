"""Experiment orchestration for VBSR-BENCH"""

from .experiment import ExperimentConfig, run_cell, run_experiment
from .parallel import ParallelRunner
from .summary import ExperimentSummary, summarize

__all__ = [
    "ExperimentConfig",
    "ExperimentSummary",
    "ParallelRunner",
    "run_cell",
    "run_experiment",
    "summarize",
]
