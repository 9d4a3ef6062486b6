"""Tests for the experiment orchestrator"""

import json
from pathlib import Path

import numpy as np
import pytest

from vbsr.algorithms.variational import VBEngine
from vbsr.exceptions import ConfigError, NumericalBreakdownError
from vbsr.models.image import GrayImage, save_pgm
from vbsr.orchestration.artifacts import METRICS_FILE, TIMINGS_FILE, read_metrics_csv
from vbsr.orchestration.experiment import (
    ExperimentConfig,
    plan_cells,
    run_cell,
    run_experiment,
    run_seed,
)
from vbsr.orchestration.parallel import ParallelRunner


@pytest.fixture
def small_image(tmp_path) -> Path:
    """6x6 test pattern; with alpha 2 each frame is 3x3."""
    yy, xx = np.mgrid[0:6, 0:6]
    pattern = np.where(xx < 3, -0.6, 0.6) + 0.1 * np.cos(yy)
    return save_pgm(GrayImage.from_array(pattern), tmp_path / "inputs" / "pattern.pgm")


def _config(tmp_path, images, **overrides):
    values = {
        "images": images,
        "alpha": 2.0,
        "frames": 2,
        "snr_db": [30.0],
        "replications": 1,
        "workers": 1,
        "output_dir": tmp_path / "results",
        "max_iterations": 3,
    }
    values.update(overrides)
    return ExperimentConfig.load(None, **values)


def test_defaults_reproduce_reference_protocol(monkeypatch):
    monkeypatch.delenv("VBSR_CONFIG", raising=False)
    monkeypatch.delenv("VBSR_WORKERS", raising=False)
    config = ExperimentConfig.load()
    assert config.alpha == 4.0
    assert config.frames == 10
    assert config.snr_db == [20.0, 25.0, 30.0]
    assert config.replications == 10
    assert config.workers == 1
    assert config.engine.max_iterations == 100
    assert config.prior_constants().phi_mean == (0.0, 0.0, 0.0, 0.75)


def test_load_merges_file_and_overrides(tmp_path):
    path = tmp_path / "vbsr.toml"
    path.write_text(
        "[experiment]\nframes = 4\nsnr_db = [25.0]\nseed = 7\n"
        "[engine]\nmax_iterations = 40\n"
        "[prior]\nhyper_a0 = 0.5\n",
        encoding="utf-8",
    )
    config = ExperimentConfig.load(path, frames=None, seed=9, max_iterations=5)
    assert config.frames == 4
    assert config.seed == 9
    assert config.snr_db == [25.0]
    assert config.engine.max_iterations == 5
    assert config.prior_constants().lam.a == 0.5


@pytest.mark.parametrize(
    "overrides",
    [{"alpha": 1.0}, {"replications": 0}, {"snr_db": [float("inf")]}, {"bogus": 1}],
)
def test_load_rejects_invalid_values(overrides):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, **overrides)


def test_run_seed_is_stable_and_distinct():
    seed = run_seed(0, "disc", 30.0, 3)
    assert seed == run_seed(0, "disc", 30.0, 3)
    assert 0 <= seed < 2**63
    others = {
        run_seed(1, "disc", 30.0, 3),
        run_seed(0, "blocks", 30.0, 3),
        run_seed(0, "disc", 25.0, 3),
        run_seed(0, "disc", 30.0, 4),
    }
    assert seed not in others
    assert len(others) == 4


def test_plan_cells_order(image_dir, tmp_path):
    images = [image_dir / "disc.pgm", image_dir / "blocks.pgm"]
    config = _config(tmp_path, images, alpha=4.0, snr_db=[20.0, 30.0], replications=2)
    cells = plan_cells(config)
    keys = [(c.image_id, c.snr_db, c.replication) for c in cells]
    assert keys == [
        ("disc", 20.0, 0),
        ("disc", 20.0, 1),
        ("disc", 30.0, 0),
        ("disc", 30.0, 1),
        ("blocks", 20.0, 0),
        ("blocks", 20.0, 1),
        ("blocks", 30.0, 0),
        ("blocks", 30.0, 1),
    ]
    assert cells[0].seed == run_seed(0, "disc", 20.0, 0)


def test_plan_cells_errors(image_dir, small_image, tmp_path):
    with pytest.raises(ConfigError, match="no input images"):
        plan_cells(_config(tmp_path, []))
    with pytest.raises(ConfigError, match="not found"):
        plan_cells(_config(tmp_path, [tmp_path / "missing.pgm"]))
    with pytest.raises(ConfigError, match="unique"):
        plan_cells(_config(tmp_path, [small_image, small_image]))
    with pytest.raises(ConfigError):
        plan_cells(_config(tmp_path, [image_dir / "disc.pgm"], alpha=3.0))


def test_run_cell_scores_the_reconstruction(small_image, tmp_path):
    config = _config(tmp_path, [small_image])
    row = run_cell(plan_cells(config)[0], config)
    assert row.ok
    assert np.isfinite(row.psnr_proposed) and np.isfinite(row.psnr_bilinear)
    assert row.isnr_bilinear == pytest.approx(row.psnr_proposed - row.psnr_bilinear)
    assert 1 <= row.iterations <= 3
    assert row.beta_mean > 0.0
    assert row.wall_time_s > 0.0
    run_dir = tmp_path / "results" / "pattern" / "snr30" / "rep00"
    for name in ("reconstruction.pgm", "bilinear.pgm", "diagnostics.jsonl", "result.json"):
        assert (run_dir / name).exists()
    assert json.loads((run_dir / "result.json").read_text())["iterations"] == row.iterations


def test_run_cell_records_failures(small_image, tmp_path, mocker):
    config = _config(tmp_path, [small_image], write_artifacts=False)
    cell = plan_cells(config)[0]

    mocker.patch(
        "vbsr.orchestration.experiment.VBEngine.run",
        side_effect=NumericalBreakdownError("b_beta", -1.0),
    )
    row = run_cell(cell, config)
    assert row.status == "failed"
    assert row.error.startswith("NUMERICAL_BREAKDOWN: b_beta")
    assert np.isnan(row.psnr_proposed)

    mocker.patch("vbsr.orchestration.experiment.VBEngine.run", side_effect=RuntimeError("boom"))
    row = run_cell(cell, config)
    assert row.error == "RuntimeError: boom"


def test_failed_cells_do_not_abort_the_batch(small_image, tmp_path, mocker):
    config = _config(tmp_path, [small_image], replications=2, write_artifacts=False)
    original = VBEngine.run
    calls = []

    def fail_first(self, diagnostics=None):
        calls.append(1)
        if len(calls) == 1:
            raise NumericalBreakdownError("b_rho", 0.0)
        return original(self, diagnostics)

    mocker.patch.object(VBEngine, "run", autospec=True, side_effect=fail_first)
    outcome = run_experiment(config, runner=ParallelRunner(1))
    assert [row.status for row in outcome.rows] == ["failed", "ok"]
    assert outcome.failures == 1
    assert len(read_metrics_csv(outcome.metrics_path)) == 2


def test_experiment_csv_is_byte_identical_across_runs(small_image, tmp_path):
    first_dir = tmp_path / "first"
    second_dir = tmp_path / "second"
    first = run_experiment(_config(tmp_path, [small_image], output_dir=first_dir))
    second = run_experiment(_config(tmp_path, [small_image], output_dir=second_dir))
    first_bytes = (first_dir / METRICS_FILE).read_bytes()
    assert first_bytes == (second_dir / METRICS_FILE).read_bytes()
    assert first.metrics_path == first_dir / METRICS_FILE

    rows = read_metrics_csv(first.metrics_path)
    assert [r.image_id for r in rows] == ["pattern"]
    timings = (first_dir / TIMINGS_FILE).read_text().splitlines()
    assert len(timings) == 1
    assert json.loads(timings[0])["wall_time_s"] > 0.0
    assert second.failures == 0
