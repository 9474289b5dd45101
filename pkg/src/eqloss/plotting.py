"""Optional matplotlib figures written next to the CSV reports.

Only imported when a command is run with ``--plot``; matplotlib is an
optional dependency (``pip install eqloss[plot]``).
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .stats import ValidSampleStats, frequency_order  # noqa: E402
from .taxonomy import CategoryTable  # noqa: E402

GROUP_COLORS = {"rare": "#d62728", "common": "#ff7f0e", "frequent": "#1f77b4"}


def _finish(fig, path):
    fig.tight_layout()
    # fixed metadata keeps PNG output byte-stable across runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_valid_stats(
    baseline: ValidSampleStats, eql: ValidSampleStats, table: CategoryTable, path
) -> None:
    """Counts of valid samples (left) and negative/positive ratio (right), categories by frequency."""
    order = frequency_order(table)
    x = range(1, len(order) + 1)
    fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(11, 4))

    ax_a.plot(x, [baseline.valid_positive[j - 1] for j in order], color="k", lw=1.2, label="positive")
    ax_a.plot(x, [baseline.valid_negative[j - 1] for j in order], color="0.5", lw=1.2, label="negative (sigmoid CE)")
    ax_a.plot(x, [eql.valid_negative[j - 1] for j in order], color="#d62728", lw=1.2, label="negative (EQL)")
    ax_a.set_yscale("log")
    ax_a.set_xlabel("category (sorted by frequency)")
    ax_a.set_ylabel("valid samples")
    ax_a.legend(frameon=False, fontsize=8)

    def finite(vals):
        return [v if math.isfinite(v) else float("nan") for v in vals]

    ax_b.plot(x, finite([baseline.ratio(j) for j in order]), color="0.5", lw=1.2, label="sigmoid CE")
    ax_b.plot(x, finite([eql.ratio(j) for j in order]), color="#d62728", lw=1.2, label="EQL")
    ax_b.set_yscale("log")
    ax_b.set_xlabel("category (sorted by frequency)")
    ax_b.set_ylabel("negative / positive")
    ax_b.legend(frameon=False, fontsize=8)
    _finish(fig, path)


def plot_ablation(rows: list[dict], path) -> None:
    """Grouped bars of per-group accuracy, one cluster per ablation cell."""
    labels = [f"{r['loss']}\n{r['sampler']}\n{'ig' if r['ignore'] else '-'}" for r in rows]
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6, 1.3 * len(rows)), 4))
    for k, group in enumerate(("rare", "common", "frequent")):
        key = "acc_" + group[0]
        vals = [r[key] if r[key] is not None else 0.0 for r in rows]
        ax.bar([i + (k - 1) * width for i in range(len(rows))], vals, width,
               color=GROUP_COLORS[group], label=group)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("holdout accuracy")
    ax.legend(frameon=False, ncol=3, fontsize=8)
    _finish(fig, path)


def plot_training_log(rows: list[dict], path) -> None:
    epochs = [r["epoch"] for r in rows]
    fig, (ax_l, ax_a) = plt.subplots(1, 2, figsize=(10, 3.6))
    ax_l.plot(epochs, [r["mean_loss"] for r in rows], color="k")
    ax_l.set_xlabel("epoch")
    ax_l.set_ylabel("mean training loss")
    for group in ("rare", "common", "frequent"):
        key = "acc_" + group[0]
        ax_a.plot(epochs, [r[key] if r[key] is not None else float("nan") for r in rows],
                  color=GROUP_COLORS[group], label=group)
    ax_a.set_xlabel("epoch")
    ax_a.set_ylabel("holdout accuracy")
    ax_a.set_ylim(0, 1)
    ax_a.legend(frameon=False, fontsize=8)
    _finish(fig, path)
