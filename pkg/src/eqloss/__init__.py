"""Equalization loss for long-tail classification.

Sigmoid cross-entropy and the equalization loss with exact gradients, the
frequency bookkeeping they need, class-aware resampling, ignore weighting for
background proposals that overlap external boxes, and frequency-aware
re-scoring of detection lists.
"""

__version__ = "0.1.0"

from .errors import (
    CategoryRangeError,
    InconsistentAnnotationError,
    InvalidInputError,
    TrainingDivergedError,
)
from .records import Box, ImageContext, LabeledSample
from .taxonomy import CategoryTable, Group, below_lambda, build_category_table, lambda_for_groups
from .losses import (
    LossResult,
    eql_loss,
    eql_weight_mask,
    sigmoid_ce,
    weighted_loss,
)
from .ignore import IgnoreConfig, ignore_sample_weights, iou
from .sampling import (
    SyntheticConfig,
    SyntheticDataset,
    class_aware_sampler,
    generate_holdout,
    generate_synthetic,
)
from .trainer import EvalReport, ModelParams, TrainConfig, evaluate, train
from .stats import ValidSampleStats, collect_valid_stats, ratio_series
from .ensemble import Detection, RescoreConfig, filter_top_k, merge_shared_categories, rescore_order

__all__ = [
    "CategoryRangeError",
    "InconsistentAnnotationError",
    "InvalidInputError",
    "TrainingDivergedError",
    "Box",
    "ImageContext",
    "LabeledSample",
    "CategoryTable",
    "Group",
    "below_lambda",
    "build_category_table",
    "lambda_for_groups",
    "LossResult",
    "eql_loss",
    "eql_weight_mask",
    "sigmoid_ce",
    "weighted_loss",
    "IgnoreConfig",
    "ignore_sample_weights",
    "iou",
    "SyntheticConfig",
    "SyntheticDataset",
    "class_aware_sampler",
    "generate_holdout",
    "generate_synthetic",
    "EvalReport",
    "ModelParams",
    "TrainConfig",
    "evaluate",
    "train",
    "ValidSampleStats",
    "collect_valid_stats",
    "ratio_series",
    "Detection",
    "RescoreConfig",
    "filter_top_k",
    "merge_shared_categories",
    "rescore_order",
]
