"""Down-weighting of background proposals that overlap an external box set.

A background proposal that overlaps a box from an external annotation source
(IoU strictly above the threshold) is probably an unannotated object, so its
classification loss is scaled by ``beta`` instead of being trusted fully.
The rule is purely geometric: the external box's category is not consulted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .records import Box

__all__ = ["Box", "IgnoreConfig", "iou", "iou_matrix", "ignore_sample_weights"]


@dataclass(frozen=True)
class IgnoreConfig:
    iou_threshold: float = 0.5
    beta: float = 0.5
    head_loss_scale: float = 2.0

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise InvalidInputError(f"iou_threshold must lie in (0, 1], got {self.iou_threshold}")
        if not 0 <= self.beta <= 1:
            raise InvalidInputError(f"beta must lie in [0, 1], got {self.beta}")
        if not (np.isfinite(self.head_loss_scale) and self.head_loss_scale > 0):
            raise InvalidInputError(f"head_loss_scale must be positive, got {self.head_loss_scale}")


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` arrays of ``x1, y1, x2, y2``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.minimum(out, 1.0)


def ignore_sample_weights(
    samples: Sequence[tuple[Box, int]],
    external_boxes: Iterable[Box],
    cfg: IgnoreConfig = IgnoreConfig(),
) -> list[float]:
    """Per-sample loss weight: ``beta`` for overlapping background, else 1.0."""
    external = list(external_boxes)
    weights = []
    for box, label in samples:
        if label == 0 and any(iou(box, ext) > cfg.iou_threshold for ext in external):
            weights.append(cfg.beta)
        else:
            weights.append(1.0)
    return weights
