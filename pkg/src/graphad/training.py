"""Mini-batch training with step decay and validation-loss early stopping."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .data import Graph, make_batch
from .errors import NumericalAbort
from .models import AdModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_step: int = 100
    max_epochs: int = 500
    batch_size: int = 128
    patience: int = 100
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("lr", "lr_decay", "lr_step", "max_epochs", "batch_size", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "betas", tuple(self.betas))


class EarlyStopping:
    """Stop once the monitored loss has not strictly improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0

    def step(self, epoch: int, loss: float) -> tuple[bool, bool]:
        """Record ``loss`` for ``epoch``; return (improved, should_stop)."""
        if loss < self.best:
            self.best, self.best_epoch = loss, epoch
            return True, False
        return False, epoch - self.best_epoch >= self.patience


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {
            "train_loss": np.asarray(self.train_loss, dtype=np.float64),
            "val_loss": np.asarray(self.val_loss, dtype=np.float64),
            "lr": np.asarray(self.lr, dtype=np.float64),
            "best_epoch": np.asarray([self.best_epoch]),
            "stopped_epoch": np.asarray([self.stopped_epoch]),
        }


def _batches(graphs: Sequence[Graph], order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield make_batch([graphs[j] for j in order[i : i + size]])


@torch.no_grad()
def evaluate_loss(model: AdModel, graphs: Sequence[Graph], batch_size: int = 128) -> float:
    """Mean per-graph loss in evaluation mode."""
    was_training = model.training
    model.eval()
    total = 0.0
    try:
        for b in _batches(graphs, np.arange(len(graphs)), batch_size):
            total += float(model.per_graph_loss(b).double().sum())
    finally:
        model.train(was_training)
    return total / len(graphs)


def _abort(model, batch, loss, epoch, bi):
    with torch.no_grad():
        terms = {k: float(v.double().mean()) for k, v in model.loss_terms(batch).items()}
    raise NumericalAbort(f"non-finite loss {loss.item()}", epoch=epoch, batch=bi, terms=terms)


def train(model: AdModel, train_set: Sequence[Graph], val_set: Sequence[Graph], cfg: TrainConfig = TrainConfig(),
          val_loss_fn=None) -> tuple[AdModel, History]:
    """Train ``model`` in place and restore the parameters with the best validation loss.

    ``val_loss_fn(model, epoch)`` overrides the validation loss (used in tests).
    """
    train_set, val_set = list(train_set), list(val_set)
    if not train_set:
        raise ValueError("empty training set")
    if not val_set and val_loss_fn is None:
        raise ValueError("early stopping needs a non-empty validation set")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    if hasattr(model, "reseed"):
        model.reseed(cfg.seed)
    model.prepare(train_set, cfg.batch_size)

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.lr_step, gamma=cfg.lr_decay)
    stopper = EarlyStopping(cfg.patience)
    hist = History()
    best_state = copy.deepcopy(model.state_dict())

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        total, seen = 0.0, 0
        for bi, batch in enumerate(_batches(train_set, rng.permutation(len(train_set)), cfg.batch_size)):
            loss = model.per_graph_loss(batch).mean()
            if not torch.isfinite(loss):
                _abort(model, batch, loss, epoch, bi)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * batch.graph_count
            seen += batch.graph_count
        hist.lr.append(opt.param_groups[0]["lr"])
        sched.step()
        hist.train_loss.append(total / seen)
        val = val_loss_fn(model, epoch) if val_loss_fn else evaluate_loss(model, val_set, cfg.batch_size)
        if not math.isfinite(val):
            raise NumericalAbort(f"non-finite validation loss {val}", epoch=epoch)
        hist.val_loss.append(val)
        improved, stop = stopper.step(epoch, val)
        if improved:
            best_state = copy.deepcopy(model.state_dict())
        hist.stopped_epoch = epoch
        if stop:
            log.info("early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break

    hist.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    model.trained.fill_(True)
    model.eval()
    return model, hist
