"""Command-line interface.

Subcommands: ``fit`` (one model from a config), ``experiment`` (full
protocol), ``diagnose`` (verification suites), ``emit`` (re-render
tables from a saved report). Exit codes: 0 success, 1 configuration
error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click

from .errors import ConfigError, DataError, NumericalError
from .experiment import (ExperimentConfig, emit_tables, run_diagnose,
                         run_experiment, run_fit, write_json_atomic)

EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
    return wrapper


def _load_config(path, seed=None, out=None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(path)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out"] = out
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        cfg = ExperimentConfig.from_dict(d)
    return cfg


@click.group()
def main():
    """Kernel-weight learning for ridge regression."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Config file (JSON).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@_exit_codes
def fit(config_path, seed, out):
    """Fit a single model and write its summary."""
    cfg = _load_config(config_path, seed=seed, out=out)
    summary = run_fit(cfg)
    if cfg.out:
        path = write_json_atomic(summary, os.path.join(cfg.out, "fit.json"))
        click.echo(path)
    else:
        click.echo(json.dumps({"converged": summary.get("converged"),
                               "objective": summary.get("objective")}))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Config file (JSON).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--jobs", type=int, default=1, help="Concurrent trial workers.")
@_exit_codes
def experiment(config_path, seed, out, jobs):
    """Run the full cross-validated experiment protocol."""
    cfg = _load_config(config_path, seed=seed, out=out)
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    report = run_experiment(cfg, jobs=jobs)
    if cfg.out:
        click.echo(os.path.join(cfg.out, "report.json"))
    else:
        for method, entry in report["methods"].items():
            click.echo(f"{method}: mean={entry['mean']} std={entry['std']}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Diagnose config (JSON).")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@_exit_codes
def diagnose(config_path, out):
    """Run the numerical verification suites."""
    try:
        with open(config_path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    result = run_diagnose(raw)
    if out:
        path = write_json_atomic(result, os.path.join(out, "diagnose.json"))
        click.echo(path)
    else:
        click.echo(json.dumps({k: "ok" for k in result}))


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(), help="Saved report JSON.")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@_exit_codes
def emit(report_path, out, fmt):
    """Re-render metric tables from a saved report."""
    try:
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open report {report_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"report {report_path} is not valid JSON: {exc}") from exc
    written = emit_tables(report, out, fmt=fmt)
    for name, path in written.items():
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    main()
