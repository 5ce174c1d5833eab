"""Experiment configuration loaded from YAML."""

from __future__ import annotations

import hashlib
import os
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .gnn import GinConfig
from .ocpool import OcPoolConfig
from .training import TrainConfig

DEEP_METHODS = ("OCGTL", "GTL", "OCGIN", "GTP")
METHODS = DEEP_METHODS + ("OCPool",)


@dataclass(frozen=True)
class ModelConfig:
    k: int = 6
    tau: float = 0.1
    squared_occ: bool = False
    gtp_ratio: float = 0.2


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    attrs: str | None = None  # None, "one_hot_degree" or "constant_one"
    degree_cap: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple = ()
    methods: tuple = METHODS
    data_root: str = "data"
    store: str = "results/results.jsonl"
    checkpoint_dir: str | None = None
    base_seed: int = 0
    folds: tuple = tuple(range(10))
    runs: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    gin: GinConfig = field(default_factory=GinConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    ocpool: OcPoolConfig = field(default_factory=OcPoolConfig)
    source: str | None = None

    def cell_config(self, method: str, dataset: str) -> dict:
        """Everything that influences one method's result on one dataset."""
        entry = next(d for d in self.datasets if d.name == dataset)
        out = {"method": method, "dataset": asdict(entry), "base_seed": self.base_seed}
        if method == "OCPool":
            out["ocpool"] = asdict(self.ocpool)
        else:
            train = asdict(self.train)
            train.pop("seed")
            out.update(train=train, gin=asdict(self.gin), model=asdict(self.model))
        return out

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **kw)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=list).encode()).hexdigest()[:16]


def _build(cls, raw, where):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(raw: dict, source: str | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    top = {f.name for f in fields(ExperimentConfig)} - {"source"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")

    datasets = []
    for d in raw.pop("datasets", []) or []:
        datasets.append(_build(DatasetEntry, {"name": d} if isinstance(d, str) else d, "datasets"))
    if not datasets:
        raise ConfigError("no datasets configured")
    methods = tuple(raw.pop("methods", METHODS))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"invalid method names {bad}; expected a subset of {METHODS}")

    folds = raw.pop("folds", 10)
    folds = tuple(range(folds)) if isinstance(folds, int) else tuple(folds)
    if not folds or any(not 0 <= f < 10 for f in folds):
        raise ConfigError("folds must be a count in 1..10 or a list of fold ids in [0, 10)")
    runs = int(raw.pop("runs", 3))
    if runs < 1:
        raise ConfigError("runs must be >= 1")

    sub = {
        "train": _build(TrainConfig, raw.pop("train", None), "train"),
        "gin": _build(GinConfig, raw.pop("gin", None), "gin"),
        "model": _build(ModelConfig, raw.pop("model", None), "model"),
        "ocpool": _build(OcPoolConfig, raw.pop("ocpool", None), "ocpool"),
    }
    try:
        return ExperimentConfig(datasets=tuple(datasets), methods=methods, folds=folds, runs=runs, source=source,
                                **sub, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = parse_config(raw, source=str(path))
    # relative paths resolve against the config file's directory
    base = path.resolve().parent

    def rel(p):
        return p if p is None or Path(p).is_absolute() else os.path.normpath(base / p)

    return replace(cfg, data_root=rel(cfg.data_root), store=rel(cfg.store), checkpoint_dir=rel(cfg.checkpoint_dir))
