"""Tests for LR stack, reconstruction and metrics files"""

import json
import math

import numpy as np
import pytest

from vbsr.algorithms.observation import synthesize_observations
from vbsr.algorithms.variational import EngineConfig, VBEngine
from vbsr.exceptions import ConfigError
from vbsr.models.image import GrayImage, load_pgm
from vbsr.models.metrics import MetricsRow
from vbsr.orchestration.artifacts import (
    cell_directory,
    load_stack,
    read_metrics_csv,
    save_stack,
    std_to_image,
    truth_registrations,
    write_metrics_csv,
    write_result_artifacts,
    write_timings,
)


@pytest.fixture
def observations(tiny_truth):
    return synthesize_observations(tiny_truth, 2, 30.0, seed=8, alpha=1.5)


def test_cell_directory_layout(tmp_path):
    path = cell_directory(tmp_path, "disc", 22.5, 3)
    assert path == tmp_path / "disc" / "snr22.5" / "rep03"


def test_stack_round_trip_is_lossless(tmp_path, observations):
    npz = save_stack(tmp_path / "stack", observations, 1.5, 30.0, 8)
    assert (tmp_path / "stack" / "frame_01.pgm").exists()
    loaded = load_stack(npz.parent)
    assert loaded.alpha == 1.5
    for original, restored in zip(observations.frames, loaded.frames, strict=True):
        np.testing.assert_array_equal(original.data, restored.data)
    assert loaded.metadata["seed"] == 8
    assert loaded.metadata["beta"] == observations.beta
    assert truth_registrations(loaded.metadata) == observations.registrations


def test_stack_without_truth_sidecar(tmp_path, observations):
    npz = save_stack(tmp_path, observations, 1.5, 30.0, None)
    (tmp_path / "truth.json").unlink()
    loaded = load_stack(npz)
    assert loaded.metadata == {}
    assert truth_registrations(loaded.metadata) is None


def test_load_stack_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_stack(tmp_path / "absent.npz")
    bad = tmp_path / "bad.npz"
    np.savez(bad, frames=np.zeros((1, 2, 2)))
    with pytest.raises(ConfigError):
        load_stack(bad)


def test_std_map_export():
    std = GrayImage.from_array([[0.0, 0.5], [1.0, 2.0]])
    np.testing.assert_allclose(std_to_image(std).data, [-1.0, 0.0, 1.0, 1.0])


def test_result_artifacts(tmp_path, observations, tiny_grid):
    engine = VBEngine(observations.frames, tiny_grid, config=EngineConfig(max_iterations=2))
    result = engine.run()
    write_result_artifacts(tmp_path, result, engine.layout, observations.frames[0])
    for name in (
        "reconstruction.pgm",
        "posterior_std.pgm",
        "edges_horizontal.pgm",
        "edges_vertical.pgm",
        "bilinear.pgm",
        "reconstruction.npy",
    ):
        assert (tmp_path / name).exists(), name
    assert load_pgm(tmp_path / "reconstruction.pgm").shape == (3, 3)
    np.testing.assert_array_equal(
        np.load(tmp_path / "reconstruction.npy"), result.pm_image.as_array()
    )
    summary = json.loads((tmp_path / "result.json").read_text())
    assert summary["iterations"] == 2
    assert set(summary["hyper_means"]) == {"lambda", "rho", "kappa", "beta"}
    assert set(summary["registration_std"][0]) == {"theta", "o_h", "o_v", "gamma"}


def _rows():
    ok = MetricsRow(
        image_id="disc",
        snr_db=25.0,
        replication=0,
        seed=11,
        psnr_proposed=30.123456789,
        psnr_bilinear=24.5,
        isnr_bilinear=30.123456789 - 24.5,
        iterations=12,
        converged=True,
        wall_time_s=3.5,
    )
    failed = MetricsRow(
        image_id="disc", snr_db=25.0, replication=1, seed=12, status="failed", error="x, y"
    )
    return [ok, failed]


def test_metrics_csv_round_trip(tmp_path):
    path = write_metrics_csv(_rows(), tmp_path / "out" / "metrics.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("image_id,snr_db,replication,seed")
    assert "wall_time_s" not in header
    ok, failed = read_metrics_csv(path)
    assert ok.psnr_proposed == 30.123456789
    assert ok.isnr_bilinear == 30.123456789 - 24.5
    assert ok.wall_time_s == 0.0
    assert failed.status == "failed"
    assert failed.error == "x, y"
    assert math.isnan(failed.psnr_proposed)


def test_metrics_csv_schema_is_checked(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("image_id,snr_db\ndisc,20\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="lacks column"):
        read_metrics_csv(path)
    with pytest.raises(FileNotFoundError):
        read_metrics_csv(tmp_path / "missing.csv")


def test_timings_sidecar(tmp_path):
    path = write_timings(_rows(), tmp_path / "timings.jsonl")
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert records[0] == {
        "image_id": "disc",
        "snr_db": 25.0,
        "replication": 0,
        "iterations": 12,
        "wall_time_s": 3.5,
    }
    assert records[1]["wall_time_s"] == 0.0
