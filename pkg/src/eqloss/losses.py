"""Sigmoid cross-entropy and equalization loss with analytic gradients.

Every loss here works on raw logits, one per foreground category; there is
no background logit. A sample with label ``c == 0`` is a background proposal
and only contributes "not category j" terms.

Each per-category term ``-log p*_j`` is a softplus:

    j == c:  -log sigmoid(x_j)     = softplus(-x_j)
    j != c:  -log(1 - sigmoid(x_j)) = softplus(x_j)

and its derivative is ``sigmoid(x_j) - [j == c]``, evaluated as
``-sigmoid(-x_j)`` on the target coordinate to keep relative precision when
the target logit is large.

Per-sample values are summed strictly left to right over ``j = 1..C`` so a
mask of ones reproduces sigmoid cross-entropy bit for bit.

The ``*_batch`` functions take ``(n, C)`` logits and are what the trainer
uses; the single-sample functions are thin views over them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CategoryRangeError, InconsistentAnnotationError, InvalidInputError
from .records import ImageContext
from .taxonomy import CategoryTable, Threshold


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class BatchLoss:
    """Per-sample loss values ``(n,)`` and logit gradients ``(n, C)``."""

    values: np.ndarray
    grads: np.ndarray

    def row(self, i: int) -> LossResult:
        return LossResult(float(self.values[i]), self.grads[i])


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _rowsum(terms: np.ndarray) -> np.ndarray:
    # cumsum is a strict left-to-right accumulation; np.sum would be pairwise
    return np.cumsum(terms, axis=-1)[..., -1]


def _check_batch(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise InvalidInputError(f"expected (n, C) logits, got shape {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise InvalidInputError(
            f"labels shape {labels.shape} does not match {logits.shape[0]} samples"
        )
    if logits.shape[1] < 1:
        raise InvalidInputError("need at least one category logit")
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("logits must be finite")
    if labels.size and (labels.min() < 0 or labels.max() > logits.shape[1]):
        raise CategoryRangeError(f"labels must lie in 0..{logits.shape[1]}")
    return logits, labels.astype(np.int64)


def _terms_and_grads(logits, labels):
    target = labels[:, None] == np.arange(1, logits.shape[1] + 1)[None, :]
    z = np.where(target, -logits, logits)
    terms = _softplus(z)
    grads = np.where(target, -1.0, 1.0) * _sigmoid(z)
    return terms, grads


def sigmoid_ce_batch(logits, labels) -> BatchLoss:
    logits, labels = _check_batch(logits, labels)
    terms, grads = _terms_and_grads(logits, labels)
    return BatchLoss(_rowsum(terms), grads)


def eql_loss_batch(logits, labels, masks) -> BatchLoss:
    logits, labels = _check_batch(logits, labels)
    masks = _check_masks(masks, logits.shape)
    terms, grads = _terms_and_grads(logits, labels)
    return BatchLoss(_rowsum(masks * terms), masks * grads)


def weighted_loss_batch(result: BatchLoss, scales) -> BatchLoss:
    """Scale each sample's value and gradient row.

    Unlike :func:`weighted_loss` a zero scale is accepted, so an ignore
    weight of ``beta = 0`` can drop a sample from a batch.
    """
    scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), result.values.shape)
    if not np.all(np.isfinite(scales)) or np.any(scales < 0):
        raise InvalidInputError("loss scales must be non-negative and finite")
    return BatchLoss(result.values * scales, result.grads * scales[:, None])


def _check_masks(masks, shape):
    masks = np.asarray(masks, dtype=np.float64)
    if masks.shape != shape:
        raise InvalidInputError(f"mask shape {masks.shape} does not match logits {shape}")
    if not np.all((masks == 0.0) | (masks == 1.0)):
        raise InvalidInputError("mask entries must be 0 or 1")
    return masks


def _single(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise InvalidInputError(f"expected a 1-D logit vector, got shape {logits.shape}")
    return logits[None, :]


def sigmoid_ce(logits, label: int) -> LossResult:
    return sigmoid_ce_batch(_single(logits), [label]).row(0)


def eql_loss(logits, label: int, mask) -> LossResult:
    logits = _single(logits)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != logits.shape[1:]:
        raise InvalidInputError(
            f"mask length {mask.shape} does not match {logits.shape[1]} logits"
        )
    return eql_loss_batch(logits, [label], mask[None, :]).row(0)


def weighted_loss(result: LossResult, scale: float) -> LossResult:
    scale = float(scale)
    if not np.isfinite(scale) or scale <= 0:
        raise InvalidInputError(f"loss scale must be positive and finite, got {scale}")
    return LossResult(result.value * scale, result.grad * scale)


def eql_weight_mask(
    label: int, ctx: ImageContext, table: CategoryTable, lam: Threshold
) -> np.ndarray:
    """0/1 weights over categories ``1..C`` for one sample.

    A weight is zero only for a foreground sample (``label > 0``) and a
    category that is below ``lam`` in frequency and not annotated (positive
    or negative) on the sample's image.
    """
    return _mask_rows([label], [ctx], table, table.below_lambda_mask(lam))[0]


def eql_weight_masks(
    labels: Sequence[int],
    contexts: Sequence[ImageContext],
    table: CategoryTable,
    lam: Threshold,
) -> np.ndarray:
    """Stacked :func:`eql_weight_mask` for aligned ``labels`` and ``contexts``."""
    if len(labels) != len(contexts):
        raise InvalidInputError("labels and contexts must be aligned")
    return _mask_rows(labels, contexts, table, table.below_lambda_mask(lam))


def _mask_rows(labels, contexts, table, below):
    C = table.num_categories
    masks = np.ones((len(labels), C), dtype=np.float64)
    per_image: dict[int, np.ndarray] = {}
    for i, (c, ctx) in enumerate(zip(labels, contexts)):
        c = _check_label(c, C)
        if c == 0:
            continue
        if c not in ctx.pos:
            raise InconsistentAnnotationError(
                f"sample labelled {c} but image {ctx.image_id} positives are {sorted(ctx.pos)}"
            )
        row = per_image.get(ctx.image_id)
        if row is None:
            annotated = np.zeros(C, dtype=bool)
            for j in ctx.annotated:
                if not 1 <= j <= C:
                    raise CategoryRangeError(f"image {ctx.image_id}: category {j} outside 1..{C}")
                annotated[j - 1] = True
            row = np.where(below & ~annotated, 0.0, 1.0)
            per_image[ctx.image_id] = row
        masks[i] = row
    return masks


def _check_label(c, C):
    c = int(c)
    if not 0 <= c <= C:
        raise CategoryRangeError(f"label {c} outside 0..{C}")
    return c
