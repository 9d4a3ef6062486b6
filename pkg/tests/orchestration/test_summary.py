"""Tests for metrics aggregation"""

import math

import pytest

from vbsr.exceptions import DomainError
from vbsr.models.metrics import MetricsRow
from vbsr.orchestration.summary import SampleStats, summarize


def _row(image_id="disc", snr_db=30.0, replication=0, **values):
    defaults = {
        "seed": replication,
        "psnr_proposed": 30.0,
        "psnr_bilinear": 24.0,
        "isnr_bilinear": 6.0,
        "sq_err_theta": 4e-6,
        "sq_err_o_h": 0.01,
        "sq_err_o_v": 0.0,
        "sq_err_gamma": 0.0,
        "iterations": 20,
        "converged": True,
        "lambda_mean": 1.0,
        "rho_mean": 10.0,
        "kappa_mean": 0.1,
        "beta_mean": 500.0,
    }
    defaults.update(values)
    return MetricsRow(image_id=image_id, snr_db=snr_db, replication=replication, **defaults)


@pytest.fixture
def rows():
    return [
        _row(replication=0, psnr_proposed=31.0, isnr_bilinear=7.0, sq_err_o_h=0.01),
        _row(replication=1, psnr_proposed=33.0, isnr_bilinear=9.0, sq_err_o_h=0.03),
        _row(replication=2, psnr_proposed=32.0, isnr_bilinear=8.0, sq_err_o_h=0.02),
    ]


def test_sample_stats():
    stats = SampleStats((31.0, 33.0, 32.0))
    assert stats.mean == pytest.approx(32.0)
    assert stats.std == pytest.approx(1.0)
    assert str(stats) == "32.00 ± 1.00"
    single = SampleStats((30.5,))
    assert single.std == 0.0
    assert str(single) == "30.50 ± 0.00 (n=1)"
    assert math.isnan(SampleStats(()).mean)


def test_cell_statistics(rows):
    summary = summarize(rows)
    (cell,) = summary.cells
    assert (cell.image_id, cell.snr_db, cell.runs, cell.failures) == ("disc", 30.0, 3, 0)
    assert cell.psnr_proposed.mean == pytest.approx(32.0)
    assert cell.psnr_proposed.std == pytest.approx(1.0)
    assert cell.isnr_bilinear.mean == pytest.approx(8.0)
    assert cell.hyper["beta_mean"].mean == pytest.approx(500.0)


def test_registration_rmse_pools_squared_errors(rows):
    summary = summarize(rows)
    assert summary.rmse("o_h", 30.0) == pytest.approx(math.sqrt(0.02))
    assert summary.rmse("theta", 30.0) == pytest.approx(0.002)
    assert summary.rmse("o_v", 30.0) == 0.0
    with pytest.raises(KeyError):
        summary.rmse("o_h", 20.0)


def test_rmse_pools_across_images():
    summary = summarize([
        _row("disc", sq_err_gamma=0.01),
        _row("blocks", sq_err_gamma=0.03),
    ])
    assert [c.image_id for c in summary.cells] == ["blocks", "disc"]
    assert summary.rmse("gamma", 30.0) == pytest.approx(math.sqrt(0.02))
    assert summary.registration[0].runs == 2


def test_failed_rows_are_counted_but_excluded(rows):
    failed = MetricsRow(
        image_id="disc", snr_db=30.0, replication=3, seed=3, status="failed", error="x"
    )
    summary = summarize([*rows, failed])
    (cell,) = summary.cells
    assert cell.runs == 4
    assert cell.failures == 1
    assert cell.psnr_proposed.n == 3
    assert summary.failures == 1
    assert summary.to_dict()["failures"] == 1
    assert "1 failed" in summary.generate_report()


def test_rmse_is_nan_without_finite_errors():
    summary = summarize([_row(sq_err_theta=math.nan), _row(replication=1, sq_err_theta=math.inf)])
    assert math.isnan(summary.rmse("theta", 30.0))
    assert summary.registration[0].runs == 0
    assert summary.rmse("o_h", 30.0) == pytest.approx(0.1)


def test_single_replication_is_flagged():
    summary = summarize([_row(psnr_proposed=29.5)])
    assert summary.cells[0].psnr_proposed.single_sample
    assert "(n=1)" in summary.generate_report()


def test_empty_table_is_rejected():
    with pytest.raises(DomainError):
        summarize([])
