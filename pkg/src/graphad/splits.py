"""Cross-validation splits for one-class experimental variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ProtocolError

N_FOLDS = 10
VAL_FRACTION = 0.1


@dataclass(frozen=True, eq=False)
class VariantSplit:
    normal_class: int
    fold: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    test_labels: np.ndarray

    def check(self, ds: Dataset | None = None) -> None:
        """Raise if any index set overlaps another or the training pool holds an anomaly."""
        tr, va, te = (set(map(int, a)) for a in (self.train_idx, self.val_idx, self.test_idx))
        if tr & va or tr & te or va & te:
            raise ProtocolError("train, validation and test indices overlap")
        if ds is not None:
            labels = ds.labels
            if np.any(labels[self.train_idx] != self.normal_class) or np.any(labels[self.val_idx] != self.normal_class):
                raise ProtocolError("training or validation pool contains a non-normal graph")
            expected = (labels[self.test_idx] != self.normal_class).astype(np.int64)
            if not np.array_equal(expected, self.test_labels):
                raise ProtocolError("test labels disagree with the dataset")


def run_seed(base_seed: int, fold: int, run: int) -> int:
    return base_seed * 1000 + fold * 10 + run


def make_variant_splits(ds: Dataset, normal_class: int, seed: int, n_folds: int = N_FOLDS) -> list[VariantSplit]:
    """Rotate a per-class 1/n_folds test slice; the rest of the normal class is split 90/10 into train/val."""
    if normal_class not in ds.class_ids:
        raise ProtocolError(f"class {normal_class} not present in {ds.name}")
    labels = ds.labels
    rng = np.random.default_rng(seed)
    slices = {}
    for c in ds.class_ids:
        members = np.flatnonzero(labels == c)
        if members.size < n_folds:
            raise ProtocolError(f"class {c} of {ds.name} has {members.size} < {n_folds} members")
        slices[c] = np.array_split(rng.permutation(members), n_folds)

    splits = []
    for fold in range(n_folds):
        test_parts, test_labels = [], []
        for c in ds.class_ids:
            test_parts.append(slices[c][fold])
            test_labels.append(np.full(slices[c][fold].size, int(c != normal_class), dtype=np.int64))
        pool = np.concatenate([s for i, s in enumerate(slices[normal_class]) if i != fold])
        pool = np.random.default_rng([seed, fold]).permutation(pool)
        n_val = max(1, int(round(VAL_FRACTION * pool.size)))
        splits.append(VariantSplit(
            normal_class=int(normal_class),
            fold=fold,
            train_idx=np.sort(pool[n_val:]),
            val_idx=np.sort(pool[:n_val]),
            test_idx=np.concatenate(test_parts),
            test_labels=np.concatenate(test_labels),
        ))
    return splits
