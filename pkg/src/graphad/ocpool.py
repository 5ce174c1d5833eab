"""Shallow baseline: pooled node attributes scored by a one-class SVM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.svm import OneClassSVM

from .data import Graph

POOLS = ("add", "mean", "max")
# libsvm stops at tol=1e-3 by default, which leaves scores dependent on row order
SOLVER_TOL = 1e-8


@dataclass(frozen=True)
class OcPoolConfig:
    pool: str = "add"
    nu: float = 0.1
    bandwidth: float | None = None  # None selects the median heuristic

    def __post_init__(self):
        if self.pool not in POOLS:
            raise ValueError(f"pool must be one of {POOLS}")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("nu must lie in (0, 1]")


def pool_features(graphs: Sequence[Graph], pool: str = "add") -> np.ndarray:
    """One row per graph: column sums, means or maxima of the node attributes."""
    reducer = {"add": np.sum, "mean": np.mean, "max": np.max}[pool]
    return np.stack([reducer(g.node_attrs.astype(np.float64), axis=0) for g in graphs])


def median_bandwidth(x: np.ndarray) -> float:
    d = pdist(x)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 0.0


class OcPool:
    """Standardize, then fit an RBF one-class SVM on training rows.

    ``score`` returns the negated decision value, so points outside the
    learned boundary score above zero.
    """

    def __init__(self, cfg: OcPoolConfig = OcPoolConfig()):
        self.cfg = cfg
        self.svm = None

    def fit(self, train_feats: np.ndarray) -> OcPool:
        x = np.asarray(train_feats, dtype=np.float64)
        if x.shape[0] < 2:
            raise ValueError("need at least two training rows")
        self.mean_ = x.mean(0)
        std = x.std(0)
        self.std_ = np.where(std > 0, std, 1.0)
        z = self._standardize(x)
        self.anchor_ = z[0]
        bw = self.cfg.bandwidth if self.cfg.bandwidth is not None else median_bandwidth(z)
        self.bandwidth_ = bw
        if bw <= 0:
            # every training row is identical
            self.svm = None
            return self
        self.svm = OneClassSVM(kernel="rbf", nu=self.cfg.nu, gamma=1.0 / (2.0 * bw * bw), tol=SOLVER_TOL)
        self.svm.fit(z)
        return self

    def _standardize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean_) / self.std_

    def score(self, feats: np.ndarray) -> np.ndarray:
        z = self._standardize(feats)
        if self.svm is None:
            return np.linalg.norm(z - self.anchor_, axis=1)
        return -self.svm.decision_function(z)


def ocsvm_fit_score(train_feats, test_feats, cfg: OcPoolConfig = OcPoolConfig()) -> np.ndarray:
    return OcPool(cfg).fit(train_feats).score(test_feats)


def ocpool_scores(train: Sequence[Graph], test: Sequence[Graph], cfg: OcPoolConfig = OcPoolConfig()) -> np.ndarray:
    return ocsvm_fit_score(pool_features(train, cfg.pool), pool_features(test, cfg.pool), cfg)
