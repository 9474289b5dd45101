"""Counts of valid positive and negative samples per category.

A (sample, category) pair is valid when its EQL weight is 1, i.e. it
contributes to the loss. With ``lam = 0`` every pair is valid and the counts
are the plain sigmoid cross-entropy ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .losses import eql_weight_masks
from .records import ImageContext
from .taxonomy import CategoryTable, Group, Threshold

CSV_COLUMNS = ("category_id", "frequency", "group", "valid_pos", "valid_neg", "ratio")


@dataclass(frozen=True)
class ValidSampleStats:
    valid_positive: tuple[int, ...]
    valid_negative: tuple[int, ...]

    @property
    def num_categories(self) -> int:
        return len(self.valid_positive)

    @property
    def neg_pos_ratio(self) -> tuple[float, ...]:
        return tuple(
            n / p if p > 0 else math.inf
            for p, n in zip(self.valid_positive, self.valid_negative)
        )

    def ratio(self, j: int) -> float:
        return self.neg_pos_ratio[j - 1]


def collect_valid_stats(
    labels: Sequence[int],
    contexts: Sequence[ImageContext],
    table: CategoryTable,
    lam: Threshold,
) -> ValidSampleStats:
    """Valid-sample counts over row-aligned sample ``labels`` and ``contexts``."""
    if len(labels) != len(contexts):
        raise InvalidInputError("labels and contexts must be aligned")
    C = table.num_categories
    labels = np.asarray(labels, dtype=np.int64)
    valid = eql_weight_masks(labels, contexts, table, lam).astype(bool)
    target = labels[:, None] == np.arange(1, C + 1)[None, :]
    pos = np.count_nonzero(valid & target, axis=0)
    neg = np.count_nonzero(valid & ~target, axis=0)
    return ValidSampleStats(tuple(int(v) for v in pos), tuple(int(v) for v in neg))


def dataset_valid_stats(dataset, table: CategoryTable, lam: Threshold) -> ValidSampleStats:
    return collect_valid_stats(dataset.labels, dataset.sample_contexts(), table, lam)


def frequency_order(table: CategoryTable) -> list[int]:
    """Category ids by descending frequency, ties by ascending id."""
    return sorted(table.categories, key=lambda j: (-table.image_count(j), j))


def ratio_series(stats: ValidSampleStats, table: CategoryTable) -> list[tuple[int, float]]:
    if stats.num_categories != table.num_categories:
        raise InvalidInputError("stats and table disagree on the number of categories")
    ratios = stats.neg_pos_ratio
    return [(j, ratios[j - 1]) for j in frequency_order(table)]


def max_group_ratio(stats: ValidSampleStats, table: CategoryTable, group: Group) -> float:
    members = table.members(group)
    if not members:
        raise InvalidInputError(f"no {group} categories in table")
    return max(stats.ratio(j) for j in members)


def _fmt_ratio(r: float) -> str:
    return "inf" if math.isinf(r) else repr(r)


def write_stats_csv(stats: ValidSampleStats, table: CategoryTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for j, r in ratio_series(stats, table):
            writer.writerow([
                j,
                repr(float(table.frequency(j))),
                str(table.group(j)),
                stats.valid_positive[j - 1],
                stats.valid_negative[j - 1],
                _fmt_ratio(r),
            ])


def read_stats_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "category_id": int(rec["category_id"]),
                "frequency": float(rec["frequency"]),
                "group": rec["group"],
                "valid_pos": int(rec["valid_pos"]),
                "valid_neg": int(rec["valid_neg"]),
                "ratio": float(rec["ratio"]),
            })
    return rows


def write_gnuplot(stats: ValidSampleStats, table: CategoryTable, path) -> None:
    """Whitespace-separated columns: rank, category, valid_pos, valid_neg, ratio."""
    lines = ["# rank category valid_pos valid_neg ratio"]
    for rank, (j, r) in enumerate(ratio_series(stats, table), start=1):
        lines.append(
            f"{rank} {j} {stats.valid_positive[j - 1]} {stats.valid_negative[j - 1]} {_fmt_ratio(r)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
