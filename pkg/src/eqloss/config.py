"""Experiment configuration: one JSON document holding every sub-config.

Example::

    {
      "seed": 0,
      "out": "runs/default",
      "group_bounds": [10, 100],
      "holdout_per_category": 20,
      "synthetic": {"num_categories": 100, "zipf_exponent": 1.2},
      "train": {"loss_kind": "eql", "lam": "auto", "epochs": 20},
      "ignore": {"iou_threshold": 0.5, "beta": 0.5, "head_loss_scale": 2.0},
      "rescore": {"alpha_rare": 0.1, "alpha_common": 0.05, "top_k": 300}
    }

Every key is optional. The root ``seed`` is copied into the synthetic and
training configs, so one number controls all randomness.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .ensemble import RescoreConfig
from .errors import InvalidInputError
from .ignore import IgnoreConfig
from .sampling import SyntheticConfig
from .taxonomy import DEFAULT_GROUP_BOUNDS, check_group_bounds
from .trainer import TrainConfig

_KEYS = {"seed", "out", "group_bounds", "holdout_per_category", "synthetic", "train", "ignore", "rescore"}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    group_bounds: tuple[int, int] = DEFAULT_GROUP_BOUNDS
    holdout_per_category: int = 20
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ignore: IgnoreConfig = field(default_factory=IgnoreConfig)
    rescore: RescoreConfig = field(default_factory=RescoreConfig)

    def __post_init__(self):
        object.__setattr__(self, "group_bounds", check_group_bounds(self.group_bounds))
        if self.synthetic.num_categories < 2:
            raise InvalidInputError("need at least 2 categories for a frequency-group split")
        if self.holdout_per_category < 1:
            raise InvalidInputError("holdout_per_category must be >= 1")
        # the root seed and the ignore settings are authoritative
        object.__setattr__(self, "synthetic", replace(self.synthetic, seed=self.seed))
        object.__setattr__(self, "train", replace(self.train, seed=self.seed, ignore=self.ignore))

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise InvalidInputError("config must be a JSON object")
        unknown = set(d) - _KEYS
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                seed=int(d.get("seed", 0)),
                out=str(d.get("out", "runs/default")),
                group_bounds=tuple(d.get("group_bounds", DEFAULT_GROUP_BOUNDS)),
                holdout_per_category=int(d.get("holdout_per_category", 20)),
                synthetic=SyntheticConfig.from_dict(d.get("synthetic", {})),
                train=TrainConfig.from_dict({k: v for k, v in d.get("train", {}).items() if k != "ignore"}),
                ignore=IgnoreConfig(**d.get("ignore", {})),
                rescore=RescoreConfig(**d.get("rescore", {})),
            )
        except TypeError as exc:
            raise InvalidInputError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: malformed JSON ({exc})") from exc
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        train = asdict(self.train)
        train.pop("ignore")
        return {
            "seed": self.seed,
            "out": self.out,
            "group_bounds": list(self.group_bounds),
            "holdout_per_category": self.holdout_per_category,
            "synthetic": asdict(self.synthetic),
            "train": train,
            "ignore": asdict(self.ignore),
            "rescore": asdict(self.rescore),
        }
