"""Command-line entry points: run a sweep, summarize stored results,
export expressions, or dry-run dataset ingestion.
"""

from __future__ import annotations

import sys

import click

from .dataset import IngestionError, load_csv
from .experiment import (
    METHODS,
    ExperimentConfig,
    ExperimentError,
    ResultStore,
    export_expressions,
    run_experiment,
    summarize,
)


@click.group()
def main():
    """Symbolic-expression dimensionality reduction experiments."""


def _build_config(config, overrides) -> ExperimentConfig:
    if config:
        cfg = ExperimentConfig.from_yaml(config)
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        cfg.__post_init__()
        return cfg
    missing = overrides.get("dataset_path") is None
    if missing:
        raise click.UsageError("either --config or --dataset is required")
    clean = {k: v for k, v in overrides.items() if v is not None}
    return ExperimentConfig(**clean)


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="YAML config; flags below override its keys.")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True))
@click.option("--label-column", default=None)
@click.option("--method", "methods", multiple=True,
              type=click.Choice(METHODS))
@click.option("--k", "k_list", multiple=True, type=int)
@click.option("--runs", type=int, default=None)
@click.option("--master-seed", type=int, default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--population", type=int, default=None)
@click.option("--generations", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--desk-scale", is_flag=True,
              help="Reduced budget: P=200, G=30, 10 runs, b=100.")
def run(config, desk_scale, methods, k_list, **flags):
    """Run the (method x k x run) sweep and persist one record per run."""
    overrides = dict(flags)
    if methods:
        overrides["methods"] = list(methods)
    if k_list:
        overrides["k_list"] = list(k_list)
    try:
        cfg = _build_config(config, overrides)
        if desk_scale:
            cfg.apply_desk_scale()
        store = run_experiment(
            cfg,
            progress=lambda i, n: click.echo(f"run {i}/{n} done", err=True),
        )
    except (ExperimentError, IngestionError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    failed = sum(1 for r in store.records if "error" in r)
    click.echo(f"{len(store.records)} records in {cfg.output_dir}"
               + (f" ({failed} failed)" if failed else ""))


@main.command("summarize")
@click.argument("results_dir", type=click.Path(exists=True))
def summarize_cmd(results_dir):
    """Print mean +/- std tables with significance stars."""
    store = ResultStore.load(results_dir)
    if not store.records:
        click.echo("error: no records found", err=True)
        sys.exit(1)
    click.echo(summarize(store))


@main.command("export-expr")
@click.argument("results_dir", type=click.Path(exists=True))
@click.option("--method", required=True, type=click.Choice(METHODS))
@click.option("--k", required=True, type=int)
@click.option("--criterion", default="best_reconstruction",
              type=click.Choice(["best_reconstruction", "best_accuracy"]))
def export_expr(results_dir, method, k, criterion):
    """Print the selected run's latent-dimension expressions."""
    store = ResultStore.load(results_dir)
    try:
        click.echo(export_expressions(store, method, k, criterion))
    except ExperimentError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command("validate-data")
@click.argument("path", type=click.Path())
@click.option("--label-column", default=None)
def validate_data(path, label_column):
    """Ingestion dry run: parse the CSV and report its shape."""
    try:
        d = load_csv(path, label_column=label_column)
    except IngestionError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(
        f"n={d.n} p={d.p} classes={d.class_count} "
        f"features={list(d.feature_names)[:8]}{'...' if d.p > 8 else ''}"
    )


if __name__ == "__main__":
    main()
