"""Detection metrics computed from anomaly scores (higher = more anomalous)."""

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 (normal) or 1 (anomaly)")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetricError("labels contain a single class")
    return scores, labels, n_pos


def auc(scores, labels) -> float:
    """ROC AUC via the rank-sum statistic with midranks for ties."""
    scores, labels, n_pos = _check(scores, labels)
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_at_contamination(scores, labels) -> float:
    """F1 of the anomaly class when the top-``#anomalies`` scores are flagged.

    Ties are broken in favour of the earlier index.
    """
    scores, labels, n_pos = _check(scores, labels)
    order = np.argsort(-scores, kind="stable")
    pred = np.zeros_like(labels)
    pred[order[:n_pos]] = 1
    tp = int((pred & labels).sum())
    if tp == 0:
        return 0.0
    precision = tp / n_pos
    recall = tp / n_pos
    return 2 * precision * recall / (precision + recall)


def detect_performance_flip(per_variant_aucs) -> bool:
    """True if any experimental variant is worse than random."""
    return bool(np.any(np.asarray(per_variant_aucs, dtype=np.float64) < 0.5))
