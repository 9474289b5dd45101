"""Minibatch SGD for a linear multi-label classifier under sigmoid CE or EQL.

The trainer does no differentiation of its own: per-sample logit gradients
come from :mod:`eqloss.losses` and are only chained through the linear map
``logits = x @ W.T + b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np

from . import losses
from .errors import InvalidInputError, TrainingDivergedError
from .ignore import IgnoreConfig, ignore_sample_weights
from .records import Box
from .sampling import SyntheticDataset, class_aware_sampler
from .taxonomy import CategoryTable, Group, lambda_for_groups

LOSS_KINDS = ("sigmoid_ce", "eql")
SAMPLER_KINDS = ("uniform", "class_aware")


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "eql"
    lam: Union[str, float] = "auto"
    sampler_kind: str = "uniform"
    ignore_enabled: bool = False
    learning_rate: float = 8.0
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    # None: IgnoreConfig.head_loss_scale when ignore is on, 1.0 otherwise
    head_loss_scale: Optional[float] = None
    ignore: IgnoreConfig = field(default_factory=IgnoreConfig)

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.sampler_kind not in SAMPLER_KINDS:
            raise InvalidInputError(f"sampler_kind must be one of {SAMPLER_KINDS}")
        if self.lam != "auto":
            try:
                lam = float(self.lam)
            except (TypeError, ValueError):
                raise InvalidInputError(f"lambda must be 'auto' or a number, got {self.lam!r}") from None
            if not 0 <= lam <= 1:
                raise InvalidInputError(f"lambda must lie in [0, 1], got {lam}")
            object.__setattr__(self, "lam", lam)
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise InvalidInputError("learning_rate must be finite and non-negative")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.head_loss_scale is not None and not (
            math.isfinite(self.head_loss_scale) and self.head_loss_scale > 0
        ):
            raise InvalidInputError("head_loss_scale must be positive")
        if isinstance(self.ignore, dict):
            object.__setattr__(self, "ignore", IgnoreConfig(**self.ignore))

    @property
    def effective_head_scale(self) -> float:
        if self.head_loss_scale is not None:
            return float(self.head_loss_scale)
        return self.ignore.head_loss_scale if self.ignore_enabled else 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelParams:
    weight: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    @classmethod
    def zeros(cls, num_categories: int, dim: int) -> ModelParams:
        return cls(np.zeros((num_categories, dim)), np.zeros(num_categories))

    def logits(self, features) -> np.ndarray:
        return np.asarray(features) @ self.weight.T + self.bias

    def copy(self) -> ModelParams:
        return ModelParams(self.weight.copy(), self.bias.copy())


@dataclass(frozen=True)
class EvalReport:
    per_category: tuple[Optional[float], ...]
    rare: Optional[float]
    common: Optional[float]
    frequent: Optional[float]
    overall: float
    background_rejection: float

    def group(self, g: Group) -> Optional[float]:
        return {Group.RARE: self.rare, Group.COMMON: self.common, Group.FREQUENT: self.frequent}[g]

    def to_json(self) -> dict:
        return {
            "overall": self.overall,
            "rare": self.rare,
            "common": self.common,
            "frequent": self.frequent,
            "background_rejection": self.background_rejection,
            "per_category": {str(j): a for j, a in enumerate(self.per_category, start=1)},
        }


def resolve_lambda(lam, table: CategoryTable) -> Fraction:
    if lam == "auto":
        return lambda_for_groups(table)
    return Fraction(lam)


def sample_loss_scales(dataset: SyntheticDataset, cfg: TrainConfig) -> np.ndarray:
    """Per-sample ``ignore_weight * head_loss_scale``."""
    scales = np.full(dataset.num_samples, cfg.effective_head_scale)
    if not cfg.ignore_enabled:
        return scales
    for i, ext in enumerate(dataset.external_boxes):
        rows = dataset.image_rows(i)
        pairs = [(Box(*b), int(c)) for b, c in zip(dataset.boxes[rows], dataset.labels[rows])]
        scales[rows] *= ignore_sample_weights(pairs, ext, cfg.ignore)
    return scales


def train(
    dataset: SyntheticDataset,
    table: CategoryTable,
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[int, ModelParams, float], None]] = None,
    on_step: Optional[Callable[[int, int, ModelParams], None]] = None,
) -> ModelParams:
    """Fit ``W, b`` by SGD on the mean per-sample (weighted) loss.

    Minibatches are groups of ``batch_size`` whole images, so every sample's
    image context is available for its EQL mask. ``on_epoch`` is called after
    each epoch with ``(epoch, params, mean_loss)``, epochs counted from 1;
    ``on_step`` after every parameter update with ``(epoch, batch, params)``.
    Callbacks receive the live parameters and must copy them to keep them.
    """
    if table.num_categories != dataset.num_categories:
        raise InvalidInputError("dataset and category table disagree on the number of categories")
    C, d = dataset.num_categories, dataset.features.shape[1]
    params = ModelParams.zeros(C, d)

    masks = None
    if cfg.loss_kind == "eql":
        lam = resolve_lambda(cfg.lam, table)
        masks = losses.eql_weight_masks(dataset.labels, dataset.sample_contexts(), table, lam)
    scales = sample_loss_scales(dataset, cfg)

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(4,)))
    sampler = class_aware_sampler(dataset, cfg.seed) if cfg.sampler_kind == "class_aware" else None
    index_of = {ctx.image_id: i for i, ctx in enumerate(dataset.images)}
    lr = cfg.learning_rate

    for epoch in range(1, cfg.epochs + 1):
        if sampler is None:
            order = rng.permutation(len(dataset.images))
        else:
            _, ids = sampler.draw(len(dataset.images))
            order = np.array([index_of[int(i)] for i in ids])
        total, count = 0.0, 0
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            rows = np.concatenate([
                np.arange(dataset.offsets[i], dataset.offsets[i + 1])
                for i in order[start:start + cfg.batch_size]
            ])
            x = dataset.features[rows]
            y = dataset.labels[rows]
            logits = params.logits(x)
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergedError(epoch, batch, float("nan"))
            if masks is None:
                res = losses.sigmoid_ce_batch(logits, y)
            else:
                res = losses.eql_loss_batch(logits, y, masks[rows])
            res = losses.weighted_loss_batch(res, scales[rows])
            with np.errstate(over="ignore"):
                mean_loss = float(np.mean(res.values))
            if not math.isfinite(mean_loss):
                raise TrainingDivergedError(epoch, batch, mean_loss)
            g = res.grads / len(rows)
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                params.weight -= lr * (g.T @ x)
                params.bias -= lr * g.sum(axis=0)
            if not (np.all(np.isfinite(params.weight)) and np.all(np.isfinite(params.bias))):
                raise TrainingDivergedError(epoch, batch, mean_loss)
            if on_step is not None:
                on_step(epoch, batch, params)
            total += float(np.sum(res.values))
            count += len(rows)
        if on_epoch is not None:
            on_epoch(epoch, params, total / count)
    return params


def evaluate(params: ModelParams, holdout: SyntheticDataset, table: CategoryTable) -> EvalReport:
    """Thresholded top-1 accuracy per category, per group, and background rejection.

    A foreground sample is correct when its highest-scoring category is its
    label and that score exceeds 0.5; a background sample is rejected when no
    score exceeds 0.5. ``sigmoid(z) > 0.5`` is tested as ``z > 0``.
    """
    if holdout.num_samples == 0:
        raise InvalidInputError("cannot evaluate on an empty holdout set")
    C = table.num_categories
    logits = params.logits(holdout.features)
    top = np.argmax(logits, axis=1) + 1
    confident = logits.max(axis=1) > 0
    labels = holdout.labels

    fg = labels > 0
    correct = fg & (top == labels) & confident
    hits = np.bincount(labels[correct], minlength=C + 1)[1:]
    seen = np.bincount(labels[fg], minlength=C + 1)[1:]
    per_category = tuple(
        float(h / n) if n else None for h, n in zip(hits.tolist(), seen.tolist())
    )

    def mean_of(cats):
        vals = [per_category[j - 1] for j in cats if per_category[j - 1] is not None]
        return float(np.mean(vals)) if vals else None

    bg = ~fg
    rejection = float(np.mean(~confident[bg])) if bg.any() else 1.0
    overall = mean_of(table.categories)
    return EvalReport(
        per_category=per_category,
        rare=mean_of(table.members(Group.RARE)),
        common=mean_of(table.members(Group.COMMON)),
        frequent=mean_of(table.members(Group.FREQUENT)),
        overall=overall if overall is not None else 0.0,
        background_rejection=rejection,
    )
