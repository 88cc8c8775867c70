"""Downstream report rendering: turns EvalReport JSON documents into a
delimited runs table plus matplotlib figures saved next to it.

The evaluation harness itself emits tables only; this module is the figure
consumer for its JSON output.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_METRICS = ("micro_f1", "macro_f1", "positive_f1", "precision", "recall", "auc")


def load_report_doc(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_runs_csv(docs: dict[str, dict], out_path: Path) -> None:
    """One row per (group, seed) with every overall metric."""
    with out_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["group", "split", "seed", "n", *_METRICS])
        for group, doc in docs.items():
            for run in doc["overall"]["runs"]:
                writer.writerow(
                    [group, doc["split"], run["seed"], run["n"]]
                    + [run[m] for m in _METRICS]
                )


def _mean_sd(doc: dict, metric: str) -> tuple[float, float] | None:
    stats = doc["overall"]["mean_sd"].get(metric)
    if stats is None:
        return None
    return stats["mean"], stats["sd"]


def plot_metric_means(docs: dict[str, dict], out_path: Path) -> None:
    """Grouped bar chart of mean +/- sd for every metric and report group."""
    fig, ax = plt.subplots(figsize=(10, 4.5))
    groups = list(docs)
    width = 0.8 / max(1, len(groups))
    for gi, group in enumerate(groups):
        xs, ys, errs = [], [], []
        for mi, metric in enumerate(_METRICS):
            stats = _mean_sd(docs[group], metric)
            if stats is None:
                continue
            xs.append(mi + gi * width)
            ys.append(stats[0])
            errs.append(stats[1])
        ax.bar(xs, ys, width=width, yerr=errs, capsize=3, label=group)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(_METRICS))])
    ax.set_xticklabels(_METRICS, rotation=20)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("evaluation metrics (mean +/- sd over seeds)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_seed_scatter(docs: dict[str, dict], out_path: Path) -> None:
    """Per-seed micro-F1 for each group."""
    fig, ax = plt.subplots(figsize=(8, 4))
    for group, doc in docs.items():
        runs = doc["overall"]["runs"]
        ax.plot(
            [r["seed"] for r in runs],
            [r["micro_f1"] for r in runs],
            marker="o",
            linestyle="-",
            label=group,
        )
    ax.set_xlabel("seed")
    ax.set_ylabel("micro-F1")
    ax.set_ylim(0, 1.05)
    ax.set_title("per-seed micro-F1")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_pr_points(docs: dict[str, dict], out_path: Path) -> None:
    """Precision vs recall means with sd error bars."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for group, doc in docs.items():
        p = _mean_sd(doc, "precision")
        r = _mean_sd(doc, "recall")
        if p is None or r is None:
            continue
        ax.errorbar(r[0], p[0], xerr=r[1], yerr=p[1], marker="o", capsize=3, label=group)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.05)
    ax.set_ylim(0, 1.05)
    ax.set_title("precision-recall trade-off")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_report(paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """Render every figure and the runs CSV for the given EvalReport JSON
    files; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = {Path(p).stem: load_report_doc(p) for p in paths}
    written = []
    csv_path = out / "runs.csv"
    write_runs_csv(docs, csv_path)
    written.append(csv_path)
    for name, plot in (
        ("metric_means.png", plot_metric_means),
        ("seed_micro_f1.png", plot_seed_scatter),
        ("pr_tradeoff.png", plot_pr_points),
    ):
        path = out / name
        plot(docs, path)
        written.append(path)
    return written
