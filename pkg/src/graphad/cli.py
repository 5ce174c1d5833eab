"""Command-line entry point: ``graphad prepare|run|ablation|report|verify``."""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from .errors import ConfigError, DataError, GraphADError

log = logging.getLogger("graphad")


def _split_list(value):
    if not value:
        return None
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _exits(fn):
    """Map library errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GraphADError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _progress(rec):
    click.echo(f"{rec['dataset']} {rec['method']} variant={rec['variant']} fold={rec['fold']} run={rec['run']} "
               f"auc={rec['auc']:.4f} f1={rec['f1']:.4f} ({rec['wall_time']:.1f}s)")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log training progress.")
def main(verbose):
    """Graph-level anomaly detection benchmark."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--root", required=True, type=click.Path(file_okay=False), help="Directory holding TU datasets.")
@click.option("--dataset", required=True, help="Dataset name, e.g. AIDS.")
@click.option("--node-attrs", is_flag=True, help="Also append continuous node attributes.")
@_exits
def prepare(root, dataset, node_attrs):
    """Load a dataset, validate it and print its per-class statistics."""
    from .data import compare_with_reference, load_fixture, load_tu_dataset, FIXTURES

    ds = load_fixture(dataset) if dataset in FIXTURES else load_tu_dataset(root, dataset, use_node_attrs=node_attrs)
    for c, st in sorted(ds.class_stats().items()):
        click.echo(f"{ds.name} class {c}: graphs={st['graphs']} attr_dim={st['attr_dim']} "
                   f"avg_nodes={st['avg_nodes']:.2f} avg_edges={st['avg_edges']:.2f}")
    problems = compare_with_reference(ds)
    for p in problems:
        click.echo(f"mismatch: {p}", err=True)
    if problems:
        raise DataError(f"{dataset} does not match the reference statistics")
    click.echo("ok")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--methods", help="Comma-separated subset of the configured methods.")
@click.option("--datasets", help="Comma-separated subset of the configured datasets.")
@click.option("--resume", is_flag=True, help="Skip cells already present in the store.")
@click.option("--out", type=click.Path(file_okay=False), help="Write summary.csv and ranks.csv here.")
@_exits
def run(config_path, methods, datasets, resume, out):
    """Run the benchmark grid described by a config file."""
    from .config import METHODS, load_config
    from .harness import ResultStore, run_benchmark
    from .report import RANK_COLUMNS, SUMMARY_COLUMNS, emit_report, to_csv

    cfg = load_config(config_path)
    methods = _split_list(methods)
    if methods:
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"invalid method names {bad}")
    new, tables = run_benchmark(cfg, methods, _split_list(datasets), resume=resume, progress=_progress)
    click.echo(f"{len(new)} new runs stored in {cfg.store}")
    click.echo(to_csv(tables["summary"], SUMMARY_COLUMNS), nl=False)
    click.echo(to_csv(tables["ranks"], RANK_COLUMNS), nl=False)
    if out:
        recs = ResultStore(cfg.store).records()
        emit_report(recs, out, datasets=_split_list(datasets) or [d.name for d in cfg.datasets],
                    methods=methods or cfg.methods)


@main.command()
@click.option("--mode", required=True, type=click.Choice(["pooling", "norm_pool"]))
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--datasets", help="Comma-separated subset of the configured datasets.")
@click.option("--resume", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), help="Directory for the paired table and plot.")
@_exits
def ablation(mode, config_path, datasets, resume, out):
    """Compare pooling choices (OCPool) or AP+GN against MP+BN (deep methods)."""
    from .config import load_config
    from .harness import ablation_store_path, run_ablation
    from .report import to_csv, write_ablation

    cfg = load_config(config_path)
    tables = run_ablation(cfg, mode, _split_list(datasets), resume=resume, progress=_progress)
    click.echo(to_csv(tables["paired"], tables["columns"]), nl=False)
    if mode == "norm_pool":
        click.echo(f"points above the diagonal: {tables['above_diagonal']}/{tables['n_points']}")
    out_dir = Path(out) if out else ablation_store_path(cfg, mode).parent
    for name, path in write_ablation(tables, out_dir).items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--store", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--plots", is_flag=True, help="Also render an AUC bar chart.")
@_exits
def report(store, out, plots):
    """Render summary.csv and ranks.csv from a results store."""
    from .harness import ResultStore
    from .report import emit_report

    if not Path(store).exists():
        raise ConfigError(f"results store not found: {store}")
    paths = emit_report(ResultStore(store).records(), out, plots=plots)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=60, show_default=True, help="Training epochs for the trained-model check.")
@click.option("--record", default="verification.json", show_default=True, type=click.Path(dir_okay=False))
@_exits
def verify(seed, epochs, record):
    """Run the theory checks and the gradient audit."""
    from .verification import run_all, write_reports

    reports = run_all(seed, epochs)
    for r in reports:
        click.echo(r.render())
    write_reports(reports, record)
    click.echo(json.dumps({r.claim_id: r.passed for r in reports}))
    if not all(r.passed for r in reports):
        sys.exit(1)


if __name__ == "__main__":
    main()
