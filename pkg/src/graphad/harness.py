"""Benchmark protocol: variants x folds x seeded runs, persisted incrementally."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch
from filelock import FileLock

from .config import DEEP_METHODS, ExperimentConfig, config_hash
from .data import DEFAULT_SYNTHESIS, FIXTURES, Dataset, load_fixture, load_tu_dataset, synthesize_attrs
from .errors import ConfigError, DataError
from .gnn import GinConfig
from .metrics import auc, f1_at_contamination
from .models import build_model, save_model, score_graphs
from .ocpool import OcPoolConfig, ocpool_scores
from .splits import VariantSplit, make_variant_splits, run_seed
from .training import train

log = logging.getLogger(__name__)


class ResultStore:
    """Append-only JSON-lines file of per-run records keyed by a content hash.

    Appends hold a file lock so concurrent workers can share one store. When
    a key occurs more than once the latest record wins.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        latest = {}
        with self.path.open() as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    latest[rec["key"]] = rec
        return list(latest.values())

    def keys(self) -> set[str]:
        return {r["key"] for r in self.records()}

    def append(self, record: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            with self.path.open("a") as fh:
                fh.write(line)
                fh.flush()


@dataclass(frozen=True)
class MethodSpec:
    """A method label plus the settings it runs with."""

    label: str
    kind: str
    gin: GinConfig
    ocpool: OcPoolConfig

    @classmethod
    def default(cls, cfg: ExperimentConfig, kind: str) -> MethodSpec:
        return cls(kind, kind, cfg.gin, cfg.ocpool)


def load_dataset(cfg: ExperimentConfig, entry) -> Dataset:
    if entry.name in FIXTURES:
        ds = load_fixture(entry.name)
    else:
        ds = load_tu_dataset(cfg.data_root, entry.name)
    mode = entry.attrs or (DEFAULT_SYNTHESIS.get(entry.name) if ds.attr_dim == 0 else None)
    if mode:
        ds = synthesize_attrs(ds, mode, entry.degree_cap)
    if ds.attr_dim == 0:
        raise DataError(f"{entry.name} has no node attributes; configure attrs: one_hot_degree|constant_one")
    return ds


def cell_key(cfg_hash: str, dataset: str, method: str, variant: int, fold: int, run: int) -> str:
    payload = json.dumps([cfg_hash, dataset, method, variant, fold, run])
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _digest(scores: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(scores, dtype=np.float64).tobytes()).hexdigest()[:16]


def run_cell(cfg: ExperimentConfig, spec: MethodSpec, ds: Dataset, split: VariantSplit, run: int,
             checkpoint: Path | None = None) -> dict:
    """Train (if needed) and score one method on one split; return metrics and scores."""
    split.check(ds)
    train_g, val_g, test_g = ds.subset(split.train_idx), ds.subset(split.val_idx), ds.subset(split.test_idx)
    seed = run_seed(cfg.base_seed, split.fold, run)
    extra = {}
    if spec.kind == "OCPool":
        scores = ocpool_scores(train_g, test_g, spec.ocpool)
    else:
        torch.manual_seed(seed)
        m = cfg.model
        model = build_model(spec.kind, ds.attr_dim, spec.gin, m.k, m.tau, m.squared_occ, m.gtp_ratio)
        model, hist = train(model, train_g, val_g, replace(cfg.train, seed=seed))
        scores = score_graphs(model, test_g, cfg.train.batch_size)["score"]
        extra = {"best_epoch": hist.best_epoch, "stopped_epoch": hist.stopped_epoch,
                 "final_val_loss": min(hist.val_loss)}
        if checkpoint is not None:
            checkpoint.parent.mkdir(parents=True, exist_ok=True)
            save_model(model, checkpoint, hist.as_arrays())
            extra["checkpoint"] = str(checkpoint)
    if not np.all(np.isfinite(scores)):
        raise DataError(f"non-finite scores from {spec.label} on {ds.name}")
    return {"seed": seed, "auc": auc(scores, split.test_labels), "f1": f1_at_contamination(scores, split.test_labels),
            "n_test": int(len(scores)), "score_digest": _digest(scores), "scores": scores, **extra}


def _resolve(cfg, methods, datasets):
    methods = tuple(methods) if methods else cfg.methods
    names = [d.name for d in cfg.datasets]
    if datasets:
        missing = [d for d in datasets if d not in names]
        if missing:
            raise ConfigError(f"datasets {missing} not in config")
        entries = [d for d in cfg.datasets if d.name in datasets]
    else:
        entries = list(cfg.datasets)
    loaded = []
    for entry in entries:
        try:
            loaded.append((entry, load_dataset(cfg, entry)))
        except DataError as exc:
            raise ConfigError(f"dataset {entry.name}: {exc}") from exc
    return methods, loaded


def run_specs(cfg: ExperimentConfig, specs: Iterable[MethodSpec], loaded, store: ResultStore, resume: bool = False,
              progress: Callable[[dict], None] | None = None) -> list[dict]:
    done = store.keys() if resume else set()
    out = []
    for entry, ds in loaded:
        for normal in ds.class_ids:
            splits = make_variant_splits(ds, normal, cfg.base_seed)
            for fold in cfg.folds:
                for spec in specs:
                    cell_cfg = cfg.cell_config(spec.kind, entry.name)
                    cell_cfg["label"] = spec.label
                    if spec.kind == "OCPool":
                        cell_cfg["ocpool"] = asdict(spec.ocpool)
                    else:
                        cell_cfg["gin"] = asdict(spec.gin)
                    chash = config_hash(cell_cfg)
                    n_runs = 1 if spec.kind == "OCPool" else cfg.runs
                    for run in range(n_runs):
                        key = cell_key(chash, entry.name, spec.label, int(normal), fold, run)
                        if key in done:
                            continue
                        ckpt = None
                        if cfg.checkpoint_dir and spec.kind != "OCPool":
                            ckpt = Path(cfg.checkpoint_dir) / f"{entry.name}_{spec.label}_v{normal}_f{fold}_r{run}.npz"
                        t0 = time.perf_counter()
                        res = run_cell(cfg, spec, ds, splits[fold], run, ckpt)
                        res.pop("scores")
                        rec = {"key": key, "config_hash": chash, "dataset": entry.name, "method": spec.label,
                               "variant": int(normal), "fold": int(fold), "run": int(run),
                               "wall_time": round(time.perf_counter() - t0, 3), **res}
                        store.append(rec)
                        out.append(rec)
                        if progress:
                            progress(rec)
    return out


def run_benchmark(cfg: ExperimentConfig, methods=None, datasets=None, resume: bool = False,
                  progress=None) -> tuple[list[dict], dict]:
    """Run every (dataset, method, variant, fold, run) cell and return (new records, summary tables)."""
    from .report import rank_table, summarize

    methods, loaded = _resolve(cfg, methods, datasets)
    store = ResultStore(cfg.store)
    specs = [MethodSpec.default(cfg, m) for m in methods]
    new = run_specs(cfg, specs, loaded, store, resume, progress)
    wanted = {(e.name, m) for e, _ in loaded for m in methods}
    records = [r for r in store.records() if (r["dataset"], r["method"]) in wanted]
    summary = summarize(records)
    return new, {"summary": summary, "ranks": rank_table(summary)}


ABLATION_MODES = ("pooling", "norm_pool")
DESIGN_CHOICES = {"AP+GN": {"readout_pool": "add", "norm": "graph_norm"},
                  "MP+BN": {"readout_pool": "mean", "norm": "batch_norm"}}


def ablation_specs(cfg: ExperimentConfig, mode: str) -> list[MethodSpec]:
    if mode == "pooling":
        return [MethodSpec(f"OCPool[{p}]", "OCPool", cfg.gin, replace(cfg.ocpool, pool=p)) for p in ("add", "mean", "max")]
    if mode == "norm_pool":
        return [MethodSpec(f"{m}[{name}]", m, replace(cfg.gin, **knobs), cfg.ocpool)
                for m in cfg.methods if m in DEEP_METHODS for name, knobs in DESIGN_CHOICES.items()]
    raise ConfigError(f"ablation mode must be one of {ABLATION_MODES}")


def ablation_store_path(cfg: ExperimentConfig, mode: str) -> Path:
    p = Path(cfg.store)
    return p.with_name(f"{p.stem}.ablation-{mode}{p.suffix}")


def run_ablation(cfg: ExperimentConfig, mode: str, datasets=None, resume: bool = False,
                 progress=None) -> dict:
    """Run a design-choice study and return its paired tables."""
    from .report import ablation_tables

    specs = ablation_specs(cfg, mode)
    _, loaded = _resolve(cfg, cfg.methods, datasets)
    store = ResultStore(ablation_store_path(cfg, mode))
    run_specs(cfg, specs, loaded, store, resume, progress)
    labels = {s.label for s in specs}
    names = {e.name for e, _ in loaded}
    records = [r for r in store.records() if r["method"] in labels and r["dataset"] in names]
    return ablation_tables(records, mode)
