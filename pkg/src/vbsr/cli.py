"""Command-line entry point: ``vbsr synthesize | reconstruct | run | summarize``"""

from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path
from typing import cast

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from vbsr import __version__
from vbsr.algorithms.bilinear import BaselineMode, bilinear_baseline
from vbsr.algorithms.observation import synthesize_observations
from vbsr.algorithms.variational import EngineConfig, PriorConstants, VBEngine
from vbsr.exceptions import VBSRError
from vbsr.models.image import load_pgm
from vbsr.models.registration import PARAMETER_NAMES, GridSpec
from vbsr.orchestration.artifacts import (
    DIAGNOSTICS_FILE,
    load_stack,
    read_metrics_csv,
    save_stack,
    truth_registrations,
    write_result_artifacts,
)
from vbsr.orchestration.experiment import ExperimentConfig, run_experiment
from vbsr.orchestration.summary import HYPER_COLUMNS, ExperimentSummary, summarize
from vbsr.utils.metrics import isnr, psnr, registration_squared_errors

app = typer.Typer(
    name="vbsr",
    help="Posterior-mean multi-frame super-resolution with a causal GMRF prior.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)


def _configure_logging(verbose: bool) -> None:
    level_name = "DEBUG" if verbose else os.environ.get("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


def _fail(exc: Exception) -> typer.Exit:
    if isinstance(exc, VBSRError):
        err_console.print(f"[bold red]error[/bold red] [{exc.error_code}] {escape(exc.detail)}")
    else:
        err_console.print(f"[bold red]error[/bold red] {escape(str(exc))}")
    return typer.Exit(code=1)


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log every sweep."),
) -> None:
    _configure_logging(verbose)


@app.command()
def version() -> None:
    """Print the package version."""
    console.print(__version__)


@app.command()
def synthesize(
    image: Path = typer.Option(..., "--image", help="Ground-truth HR image (PGM)."),
    out: Path = typer.Option(..., "--out", help="Directory for the LR stack."),
    alpha: float = typer.Option(4.0, "--alpha", help="Enhancement factor."),
    frames: int = typer.Option(10, "--frames", min=1, help="Number of LR frames."),
    snr: float = typer.Option(30.0, "--snr", help="Noise level in dB."),
    seed: int = typer.Option(0, "--seed", min=0),
) -> None:
    """Simulate an LR stack and its ground-truth registrations from an HR image."""
    try:
        truth = load_pgm(image)
        GridSpec.from_factor(truth.width, truth.height, alpha)
        obs = synthesize_observations(truth, frames, snr, seed, alpha)
        npz_path = save_stack(out, obs, alpha, snr, seed)
    except (VBSRError, OSError) as exc:
        raise _fail(exc) from exc
    console.print(f"Wrote {frames} frames (beta = {obs.beta:.6g}) to [bold]{npz_path}[/bold]")


@app.command()
def reconstruct(
    stack: Path = typer.Option(..., "--stack", help="stack.npz or the directory holding it."),
    out: Path = typer.Option(..., "--out", help="Directory for the reconstruction artifacts."),
    max_iters: int = typer.Option(100, "--max-iters", min=1),
    truth_image: Path | None = typer.Option(
        None, "--truth-image", help="HR ground truth; enables PSNR reporting."
    ),
    baseline: str = typer.Option("first", "--baseline", help="Bilinear baseline: first | mean."),
) -> None:
    """Reconstruct the posterior-mean HR image from an LR stack."""
    if baseline not in ("first", "mean"):
        raise typer.BadParameter("baseline must be 'first' or 'mean'")
    try:
        loaded = load_stack(stack)
        first = loaded.frames[0]
        grid = GridSpec.from_factor(
            round(first.width * loaded.alpha), round(first.height * loaded.alpha), loaded.alpha
        )
        engine = VBEngine(
            loaded.frames,
            grid,
            prior=PriorConstants.for_alpha(loaded.alpha),
            config=EngineConfig(max_iterations=max_iters),
        )
        result = engine.run(out / DIAGNOSTICS_FILE)
        upsampled = bilinear_baseline(loaded.frames, loaded.alpha, cast(BaselineMode, baseline))
        write_result_artifacts(out, result, engine.layout, upsampled)
    except (VBSRError, OSError) as exc:
        raise _fail(exc) from exc

    status = "converged" if result.converged else "hit the iteration cap"
    console.print(f"{status} after {result.iterations} sweeps ({result.wall_time:.1f}s)")
    if truth_image is not None:
        try:
            truth = load_pgm(truth_image)
            p_vb, p_bl = psnr(result.pm_image, truth), psnr(upsampled, truth)
            gain = isnr(p_vb, p_bl) if math.isfinite(p_vb) and math.isfinite(p_bl) else None
        except (VBSRError, OSError) as exc:
            raise _fail(exc) from exc
        gain_text = f"{gain:.2f} dB" if gain is not None else "undefined"
        console.print(f"PSNR {p_vb:.2f} dB, bilinear {p_bl:.2f} dB, ISNR {gain_text}")

    truth_phi = truth_registrations(loaded.metadata)
    if truth_phi is not None:
        try:
            sq_err = registration_squared_errors(result.registration, truth_phi)
        except VBSRError as exc:
            raise _fail(exc) from exc
        table = Table(title="Registration error vs truth")
        for name in PARAMETER_NAMES:
            table.add_column(name, justify="right")
        table.add_row(*(f"{math.sqrt(e):.4g}" for e in sq_err))
        console.print(table)


@app.command()
def run(
    image: list[Path] = typer.Option([], "--image", help="HR image(s); repeatable."),
    alpha: float | None = typer.Option(None, "--alpha"),
    frames: int | None = typer.Option(None, "--frames"),
    snr: list[float] = typer.Option([], "--snr", help="SNR level in dB; repeatable."),
    reps: int | None = typer.Option(None, "--reps"),
    seed: int | None = typer.Option(None, "--seed"),
    max_iters: int | None = typer.Option(None, "--max-iters"),
    out: Path | None = typer.Option(None, "--out"),
    config: Path | None = typer.Option(None, "--config", help="TOML configuration."),
    workers: int | None = typer.Option(None, "--workers"),
    baseline: str | None = typer.Option(None, "--baseline"),
) -> None:
    """Run the full protocol and write metrics.csv plus per-run artifacts."""
    try:
        cfg = ExperimentConfig.load(
            config,
            images=image or None,
            alpha=alpha,
            frames=frames,
            snr_db=snr or None,
            replications=reps,
            seed=seed,
            max_iterations=max_iters,
            output_dir=out,
            workers=workers,
            baseline=baseline,
        )
        outcome = run_experiment(cfg)
    except (VBSRError, OSError) as exc:
        raise _fail(exc) from exc

    console.print(f"Metrics written to [bold]{outcome.metrics_path}[/bold]")
    ok_rows = [row for row in outcome.rows if row.ok]
    if ok_rows:
        _print_summary(summarize(outcome.rows))
    if outcome.failures:
        err_console.print(f"[yellow]{outcome.failures} of {len(outcome.rows)} runs failed[/yellow]")


@app.command("summarize")
def summarize_command(
    csv_path: Path = typer.Argument(..., help="metrics.csv from `vbsr run`."),
    as_json: bool = typer.Option(False, "--json", help="Emit JSON instead of tables."),
) -> None:
    """Aggregate a metrics CSV into PSNR/ISNR and registration RMSE tables."""
    try:
        summary = summarize(read_metrics_csv(csv_path))
    except (VBSRError, OSError) as exc:
        raise _fail(exc) from exc
    if as_json:
        typer.echo(json.dumps(summary.to_dict(), indent=2))
    else:
        _print_summary(summary)


def _print_summary(summary: ExperimentSummary) -> None:
    quality = Table(title="PSNR / ISNR (mean ± std)")
    for column in ("image", "SNR", "runs", "failed", "PSNR proposed", "PSNR bilinear", "ISNR"):
        quality.add_column(column)
    for cell in summary.cells:
        quality.add_row(
            cell.image_id,
            f"{cell.snr_db:g}",
            str(cell.runs),
            str(cell.failures),
            str(cell.psnr_proposed),
            str(cell.psnr_bilinear),
            str(cell.isnr_bilinear),
        )
    console.print(quality)

    registration = Table(title="Registration RMSE")
    for column in ("parameter", "SNR", "runs", "RMSE"):
        registration.add_column(column)
    for entry in summary.registration:
        registration.add_row(
            entry.parameter, f"{entry.snr_db:g}", str(entry.runs), f"{entry.rmse:.4f}"
        )
    console.print(registration)

    hyper = Table(title="Posterior hyperparameter means (mean ± std over runs)")
    for column in ("image", "SNR", "lambda", "rho", "kappa", "beta"):
        hyper.add_column(column)
    for cell in summary.cells:
        spreads = [cell.hyper[name] for name in HYPER_COLUMNS]
        hyper.add_row(
            cell.image_id,
            f"{cell.snr_db:g}",
            *(f"{stats.mean:.4g} ± {stats.std:.2g}" for stats in spreads),
        )
    console.print(hyper)


if __name__ == "__main__":
    app()
