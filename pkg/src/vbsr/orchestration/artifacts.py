"""
On-disk artifacts: LR stacks, reconstruction images and metrics tables

An LR stack is stored twice: as 8-bit PGMs for inspection and losslessly in
``stack.npz`` together with ``truth.json`` (ground-truth registrations and
noise precision). Only the npz is read back.
"""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from vbsr.algorithms.gmrf import LineProcessLayout, edge_field_images
from vbsr.algorithms.observation import Observations
from vbsr.algorithms.variational import SRResult
from vbsr.exceptions import ConfigError
from vbsr.models.image import GrayImage, save_pgm
from vbsr.models.metrics import CSV_COLUMNS, MetricsRow
from vbsr.models.registration import PARAMETER_NAMES, RegistrationParams

logger = logging.getLogger(__name__)

STACK_FILE = "stack.npz"
TRUTH_FILE = "truth.json"
METRICS_FILE = "metrics.csv"
TIMINGS_FILE = "timings.jsonl"
DIAGNOSTICS_FILE = "diagnostics.jsonl"


def cell_directory(output_dir: Path, image_id: str, snr_db: float, replication: int) -> Path:
    return output_dir / image_id / f"snr{snr_db:g}" / f"rep{replication:02d}"


class LoadedStack(NamedTuple):
    frames: list[GrayImage]
    alpha: float
    metadata: dict[str, Any]


def save_stack(
    directory: Path,
    observations: Observations,
    alpha: float,
    snr_db: float,
    seed: int | None,
) -> Path:
    """Write ``frame_XX.pgm``, ``stack.npz`` and ``truth.json``; returns the npz path."""
    directory.mkdir(parents=True, exist_ok=True)
    for idx, frame in enumerate(observations.frames):
        save_pgm(frame, directory / f"frame_{idx:02d}.pgm")
    first = observations.frames[0]
    stack = np.stack([frame.as_array() for frame in observations.frames])
    npz_path = directory / STACK_FILE
    np.savez(npz_path, frames=stack, alpha=np.float64(alpha))

    truth = {
        "alpha": alpha,
        "snr_db": snr_db,
        "seed": seed,
        "beta": observations.beta,
        "lr_width": first.width,
        "lr_height": first.height,
        "registrations": [phi.model_dump() for phi in observations.registrations],
    }
    (directory / TRUTH_FILE).write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %d-frame stack to %s", len(observations.frames), directory)
    return npz_path


def load_stack(path: Path) -> LoadedStack:
    """Read ``stack.npz`` (a file or the directory holding it) and its sidecar truth.

    Raises:
        FileNotFoundError: If the npz is missing
        ConfigError: If the archive lacks frames or the enhancement factor
    """
    npz_path = path / STACK_FILE if path.is_dir() else path
    if not npz_path.exists():
        raise FileNotFoundError(f"LR stack not found: {npz_path}")
    with np.load(npz_path) as archive:
        if not {"frames", "alpha"} <= set(archive.files):
            raise ConfigError(f"{npz_path} must contain 'frames' and 'alpha'")
        stack = np.asarray(archive["frames"], dtype=np.float64)
        alpha = float(archive["alpha"])
    truth_path = npz_path.parent / TRUTH_FILE
    metadata: dict[str, Any] = (
        json.loads(truth_path.read_text(encoding="utf-8")) if truth_path.exists() else {}
    )
    return LoadedStack(
        frames=[GrayImage.from_array(frame) for frame in stack], alpha=alpha, metadata=metadata
    )


def truth_registrations(metadata: dict[str, Any]) -> list[RegistrationParams] | None:
    raw = metadata.get("registrations")
    if raw is None:
        return None
    return [RegistrationParams.model_validate(item) for item in raw]


def std_to_image(std: GrayImage) -> GrayImage:
    """Map a standard-deviation map in [0, 1] onto the luminance range for export."""
    return GrayImage(
        width=std.width, height=std.height, data=np.clip(2.0 * std.data - 1.0, -1.0, 1.0)
    )


def _diag_std(cov: np.ndarray) -> list[float]:
    return [float(v) for v in np.sqrt(np.clip(np.diag(cov), 0.0, None))]


def write_result_artifacts(
    directory: Path,
    result: SRResult,
    layout: LineProcessLayout,
    baseline: GrayImage | None = None,
) -> None:
    """Reconstruction, posterior std map, edge fields and a JSON summary."""
    directory.mkdir(parents=True, exist_ok=True)
    save_pgm(result.pm_image, directory / "reconstruction.pgm")
    save_pgm(std_to_image(result.posterior_std), directory / "posterior_std.pgm")
    fields = edge_field_images(result.edge_means, layout)
    if fields.horizontal is not None:
        save_pgm(fields.horizontal, directory / "edges_horizontal.pgm")
    if fields.vertical is not None:
        save_pgm(fields.vertical, directory / "edges_vertical.pgm")
    if baseline is not None:
        save_pgm(baseline, directory / "bilinear.pgm")
    np.save(directory / "reconstruction.npy", result.pm_image.as_array())

    summary = {
        "iterations": result.iterations,
        "converged": result.converged,
        "hyper_means": result.hyper_means.model_dump(by_alias=True),
        "registration": [phi.model_dump() for phi in result.registration],
        "registration_std": [
            dict(zip(PARAMETER_NAMES, _diag_std(cov), strict=True))
            for cov in result.registration_covariances
        ],
    }
    (directory / "result.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def write_metrics_csv(rows: Iterable[MetricsRow], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fp:
        writer = csv.DictWriter(fp, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_csv_row())
    return path


def read_metrics_csv(path: Path) -> list[MetricsRow]:
    """Parse a metrics CSV written by :func:`write_metrics_csv`.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ConfigError: If the header does not match the schema
    """
    if not path.exists():
        raise FileNotFoundError(f"metrics CSV not found: {path}")
    with path.open(newline="", encoding="utf-8") as fp:
        reader = csv.DictReader(fp)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path} lacks column(s): {', '.join(sorted(missing))}")
        return [MetricsRow.from_csv_row(row) for row in reader]


def write_timings(rows: Sequence[MetricsRow], path: Path) -> Path:
    """Wall times live in their own JSONL so the metrics CSV stays reproducible."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fp:
        for row in rows:
            record = {
                "image_id": row.image_id,
                "snr_db": row.snr_db,
                "replication": row.replication,
                "iterations": row.iterations,
                "wall_time_s": row.wall_time_s,
            }
            fp.write(json.dumps(record) + "\n")
    return path
