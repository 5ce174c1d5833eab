"""Aggregation of per-run records into tables, CSV files and plots."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .metrics import detect_performance_flip

SUMMARY_COLUMNS = ("dataset", "method", "variant", "auc_mean", "auc_std", "f1_mean", "f1_std", "flip")
RANK_COLUMNS = ("method", "rank_mean", "rank_std", "n_datasets")
ALL_VARIANTS = "all"


def _fold_means(records):
    """{(dataset, method, variant): {fold: (auc, f1)}} averaged over runs."""
    acc = defaultdict(lambda: defaultdict(list))
    for r in records:
        acc[(r["dataset"], r["method"], r["variant"])][r["fold"]].append((r["auc"], r["f1"]))
    return {k: {f: tuple(np.mean(v, axis=0)) for f, v in folds.items()} for k, folds in acc.items()}


def summarize(records: list[dict]) -> list[dict]:
    """Mean and std over folds per variant, plus a variant-averaged row per (dataset, method).

    Runs within a fold are averaged first; std is the population std over folds.
    """
    per_fold = _fold_means(records)
    rows = []
    grouped = defaultdict(dict)
    for (ds, method, variant), folds in per_fold.items():
        grouped[(ds, method)][variant] = folds
    for (ds, method), variants in sorted(grouped.items()):
        variant_aucs = []
        for variant, folds in sorted(variants.items()):
            vals = np.array([folds[f] for f in sorted(folds)])
            row = _row(ds, method, str(variant), vals)
            variant_aucs.append(row["auc_mean"])
            rows.append(row)
        common = sorted(set.intersection(*(set(f) for f in variants.values())))
        if common:
            vals = np.array([np.mean([variants[v][f] for v in variants], axis=0) for f in common])
            row = _row(ds, method, ALL_VARIANTS, vals)
            row["flip"] = detect_performance_flip(variant_aucs)
            rows.append(row)
    return rows


def _row(ds, method, variant, vals):
    return {"dataset": ds, "method": method, "variant": variant,
            "auc_mean": float(vals[:, 0].mean()), "auc_std": float(vals[:, 0].std()),
            "f1_mean": float(vals[:, 1].mean()), "f1_std": float(vals[:, 1].std()),
            "flip": bool(vals[:, 0].mean() < 0.5)}


def rank_table(summary: list[dict]) -> list[dict]:
    """Average rank of each method across datasets (1 = highest mean AUC; ties share the midrank)."""
    per_ds = defaultdict(dict)
    for r in summary:
        if r["variant"] == ALL_VARIANTS:
            per_ds[r["dataset"]][r["method"]] = r["auc_mean"]
    ranks = defaultdict(list)
    for ds, scores in sorted(per_ds.items()):
        methods = sorted(scores)
        for m, rk in zip(methods, rankdata([-scores[m] for m in methods])):
            ranks[m].append(float(rk))
    return [{"method": m, "rank_mean": float(np.mean(v)), "rank_std": float(np.std(v)), "n_datasets": len(v)}
            for m, v in sorted(ranks.items())]


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def ablation_tables(records: list[dict], mode: str) -> dict:
    summary = [r for r in summarize(records) if r["variant"] == ALL_VARIANTS]
    by = {(r["dataset"], r["method"]): r for r in summary}
    if mode == "pooling":
        rows = []
        for ds in sorted({r["dataset"] for r in summary}):
            row = {"dataset": ds}
            for p in ("add", "mean", "max"):
                r = by.get((ds, f"OCPool[{p}]"))
                row[f"{p}_auc"] = r["auc_mean"] if r else float("nan")
                row[f"{p}_std"] = r["auc_std"] if r else float("nan")
            rows.append(row)
        return {"mode": mode, "paired": rows, "columns": ("dataset", "add_auc", "add_std", "mean_auc", "mean_std",
                                                          "max_auc", "max_std")}
    points = []
    for (ds, label), r in sorted(by.items()):
        if not label.endswith("[AP+GN]"):
            continue
        method = label[: -len("[AP+GN]")]
        other = by.get((ds, f"{method}[MP+BN]"))
        if other is None:
            continue
        points.append({"dataset": ds, "method": method, "x_mp_bn": other["auc_mean"], "x_std": other["auc_std"],
                       "y_ap_gn": r["auc_mean"], "y_std": r["auc_std"]})
    above = sum(p["y_ap_gn"] > p["x_mp_bn"] for p in points)
    return {"mode": mode, "paired": points, "above_diagonal": above, "n_points": len(points),
            "columns": ("dataset", "method", "x_mp_bn", "x_std", "y_ap_gn", "y_std")}


def emit_report(records: list[dict], out_dir, plots: bool = False, datasets=None, methods=None) -> dict[str, Path]:
    """Write summary.csv and ranks.csv (and optionally PNG plots) for the selected records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if datasets is not None:
        records = [r for r in records if r["dataset"] in set(datasets)]
    if methods is not None:
        records = [r for r in records if r["method"] in set(methods)]
    summary = summarize(records)
    paths = {"summary": out / "summary.csv", "ranks": out / "ranks.csv"}
    paths["summary"].write_text(to_csv(summary, SUMMARY_COLUMNS))
    paths["ranks"].write_text(to_csv(rank_table(summary), RANK_COLUMNS))
    if plots and summary:
        paths["bars"] = plot_bars(summary, out / "auc_bars.png")
    return paths


def write_ablation(tables: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = tables["mode"]
    name = "pooling_table.csv" if mode == "pooling" else "norm_pool_scatter.csv"
    path = out / name
    path.write_text(to_csv(tables["paired"], tables["columns"]))
    paths = {"table": path}
    if mode == "norm_pool" and tables["paired"]:
        paths["scatter"] = plot_scatter(tables["paired"], out / "norm_pool_scatter.png")
    return paths


def plot_bars(summary: list[dict], path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in summary if r["variant"] == ALL_VARIANTS]
    datasets = sorted({r["dataset"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(max(4, 1.5 * len(datasets)), 3))
    for i, m in enumerate(methods):
        vals = [next((r["auc_mean"] for r in rows if r["dataset"] == d and r["method"] == m), np.nan) for d in datasets]
        errs = [next((r["auc_std"] for r in rows if r["dataset"] == d and r["method"] == m), 0.0) for d in datasets]
        ax.bar(np.arange(len(datasets)) + i * width, vals, width, yerr=errs, label=m)
    ax.set_xticks(np.arange(len(datasets)) + 0.4 - width / 2)
    ax.set_xticklabels(datasets)
    ax.set_ylabel("AUC")
    ax.axhline(0.5, color="grey", lw=0.5, ls="--")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scatter(points: list[dict], path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    for m in sorted({p["method"] for p in points}):
        sel = [p for p in points if p["method"] == m]
        ax.errorbar([p["x_mp_bn"] for p in sel], [p["y_ap_gn"] for p in sel], xerr=[p["x_std"] for p in sel],
                    yerr=[p["y_std"] for p in sel], fmt="o", label=m)
    ax.plot([0, 1], [0, 1], color="grey", lw=0.5)
    ax.set_xlabel("MP + BN AUC")
    ax.set_ylabel("AP + GN AUC")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
