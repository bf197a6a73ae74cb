"""Batch command-line front door.

Subcommands tie the pipeline together: ``gen-dataset`` builds training
datasets from a TOML config, ``simulate`` draws seeded ensembles from a
parameter image, ``estimate`` runs the sliding-window MLE, ``eval-cov``
audits correlation structure against a reference ensemble, and ``metrics``
scores a parameter-image estimate against ground truth.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage/config errors.
SARFIELD_THREADS sets the default worker-thread cap.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .analytics import correlation_row_analysis, paired_ttest, param_metrics, sample_anchors
from .dataset import DatasetConfig, write_dataset
from .errors import SarFieldError
from .files import read_ensemble, read_params, write_ensemble, write_params
from .mle import WindowSpec, sliding_window_estimate
from .sar import GridGeometry
from .simulate import simulate_ensemble, standardize_pixelwise

_THREADS_ENVVAR = "SARFIELD_THREADS"


def _hash_payload(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _provenance(seed, payload: dict) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": _hash_payload(payload),
        "seed": seed,
    }


def _load_dataset_config(path: Path, seed_override: int | None) -> DatasetConfig:
    try:
        raw = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}")
    section = raw.get("dataset", raw)
    if seed_override is not None:
        section = dict(section) | {"seed": seed_override}
    try:
        return DatasetConfig(**section)
    except (TypeError, SarFieldError) as exc:
        raise click.UsageError(f"invalid dataset config {path}: {exc}")


def _runtime(exc: Exception) -> click.ClickException:
    return click.ClickException(str(exc))


@click.group()
@click.version_option(version=__version__)
def main():
    """Non-stationary SAR random-field toolkit."""


@main.command("gen-dataset")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Output file (default <config stem>.h5).")
@click.option("--threads", type=int, default=None, envvar=_THREADS_ENVVAR, help="Worker threads for sample generation.")
def cmd_gen_dataset(config_path: Path, seed: int | None, out: Path | None, threads: int | None):
    """Generate a (fields, params) dataset from a TOML config."""
    config = _load_dataset_config(config_path, seed)
    out = out if out is not None else config_path.with_suffix(".h5")
    try:
        write_dataset(config, out, threads=threads or 1)
    except SarFieldError as exc:
        raise _runtime(exc)
    click.echo(f"wrote {config.n_samples} samples to {out}")


@main.command("simulate")
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("-M", "--replicates", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--boundary", type=click.Choice(["truncate", "periodic-x"]), default="truncate")
@click.option("--standardize/--no-standardize", default=False, help="Pixelwise-standardize the ensemble before writing.")
def cmd_simulate(params_path: Path, replicates: int, seed: int, out: Path, boundary: str, standardize: bool):
    """Simulate a replicate ensemble from a stored parameter image."""
    if replicates < 1:
        raise click.UsageError("replicates must be >= 1")
    try:
        params = read_params(params_path)
        h, w = params.shape
        ensemble = simulate_ensemble(params, GridGeometry(h, w, boundary), replicates, seed)
        if standardize:
            ensemble = standardize_pixelwise(ensemble)
        payload = {
            "command": "simulate",
            "params_file": str(params_path),
            "replicates": replicates,
            "seed": seed,
            "boundary": boundary,
            "standardize": standardize,
        }
        write_ensemble(out, ensemble, config_hash=_hash_payload(payload), extra=payload)
    except SarFieldError as exc:
        raise _runtime(exc)
    click.echo(f"wrote {replicates} replicates to {out}")


@main.command("estimate")
@click.option("--ensemble", "ensemble_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--window", type=int, default=25, help="Odd window size (canonical: 9, 17, 25).")
@click.option("--stride", type=int, default=1)
@click.option("--warm-start/--no-warm-start", default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def cmd_estimate(ensemble_path: Path, window: int, stride: int, warm_start: bool, out: Path):
    """Sliding-window MLE parameter estimation over an ensemble."""
    try:
        ensemble = read_ensemble(ensemble_path)
        if not ensemble.standardized:
            ensemble = standardize_pixelwise(ensemble)
        spec = WindowSpec(size=window, stride=stride)
        result = sliding_window_estimate(ensemble, spec, warm_start=warm_start)
        payload = {
            "command": "estimate",
            "ensemble_file": str(ensemble_path),
            "window": window,
            "stride": stride,
            "warm_start": warm_start,
        }
        write_params(
            out,
            result.params,
            seed=ensemble.seed,
            config_hash=_hash_payload(payload),
            converged=result.converged,
            extra=payload,
        )
    except SarFieldError as exc:
        raise _runtime(exc)
    n_bad = int((~result.converged).sum())
    click.echo(f"wrote estimates to {out} ({n_bad} non-converged pixels filled)")


@main.command("eval-cov")
@click.option("--true-ensemble", "true_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--sim-ensemble", "sim_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--baseline-ensemble", "baseline_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
              help="Second simulated ensemble; enables the paired t-test of sim vs baseline row RMSEs.")
@click.option("--anchors", "n_anchors", type=int, default=50, show_default=True)
@click.option("--seed", type=int, required=True, help="Seed for anchor sampling.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def cmd_eval_cov(true_path: Path, sim_path: Path, baseline_path: Path | None, n_anchors: int, seed: int, out: Path):
    """Compare correlation rows of a simulated ensemble against reference fields.

    Per-anchor RMSE between matched Pearson correlation rows is reported;
    with a baseline ensemble, a one-sided paired t-test checks whether the
    primary ensemble's rows are closer to the truth than the baseline's.
    """
    try:
        truth = read_ensemble(true_path)
        sim = read_ensemble(sim_path)
        anchors = sample_anchors(truth.grid_shape, n_anchors, seed)
        report = correlation_row_analysis(truth, sim, anchors)
        result = {
            "provenance": _provenance(seed, {
                "command": "eval-cov",
                "true_ensemble": str(true_path),
                "sim_ensemble": str(sim_path),
                "baseline_ensemble": str(baseline_path) if baseline_path else None,
                "n_anchors": n_anchors,
                "seed": seed,
            }),
            "cov_analysis": report.to_dict(),
        }
        click.echo(f"mean correlation-row RMSE (sim vs true): {report.mean_rmse:.5f}")
        if baseline_path is not None:
            baseline = read_ensemble(baseline_path)
            baseline_report = correlation_row_analysis(truth, baseline, anchors)
            ttest = paired_ttest(report.per_anchor_rmse - baseline_report.per_anchor_rmse)
            result["baseline_cov_analysis"] = baseline_report.to_dict()
            result["paired_ttest"] = ttest.to_dict()
            click.echo(f"mean correlation-row RMSE (baseline vs true): {baseline_report.mean_rmse:.5f}")
            click.echo(ttest.format_table())
        Path(out).write_text(json.dumps(result, indent=2, sort_keys=True))
    except SarFieldError as exc:
        raise _runtime(exc)
    click.echo(f"wrote report to {out}")


@main.command("metrics")
@click.option("--est", "est_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--wrap-theta", is_flag=True, default=False, help="Score theta modulo pi.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def cmd_metrics(est_path: Path, truth_path: Path, wrap_theta: bool, out: Path):
    """Parameter-image metrics (RMSE/MAE/SSIM/PSNR/NRMSE per channel)."""
    try:
        est = read_params(est_path)
        truth = read_params(truth_path)
        report = param_metrics(est, truth, wrap_theta=wrap_theta)
        result = {
            "provenance": _provenance(None, {
                "command": "metrics",
                "est": str(est_path),
                "truth": str(truth_path),
                "wrap_theta": wrap_theta,
            }),
            "metrics": report.to_dict(),
        }
        Path(out).write_text(json.dumps(result, indent=2, sort_keys=True))
        click.echo(report.format_table())
    except SarFieldError as exc:
        raise _runtime(exc)
    click.echo(f"wrote report to {out}")


if __name__ == "__main__":
    main()
