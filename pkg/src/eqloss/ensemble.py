"""Detection post-processing: frequency-aware re-scoring, top-k filtering, merging.

Re-scoring never changes a detection's score; it only changes the order.
Each detection is ranked by ``score + alpha(group)``, so a rare-category
detection outranks a frequent one whenever ``score_r + alpha_rare > score_f``.
Ranking keys are compared as exact rationals so that ties and offset shifts
behave exactly rather than up to float rounding.

Detection files are JSON lists of
``{"image_id", "category_id", "bbox": [x1, y1, x2, y2], "score"}`` with an
optional ``"source"`` tag, which is always written on output.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInputError
from .records import Box
from .taxonomy import CategoryTable, Group

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Detection:
    box: Box
    category: int
    score: float
    source: str = "primary"
    image_id: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"detection score must lie in [0, 1], got {self.score}")
        if self.category < 1:
            raise InvalidInputError(f"detection category must be >= 1, got {self.category}")


@dataclass(frozen=True)
class RescoreConfig:
    alpha_rare: float = 0.1
    alpha_common: float = 0.05
    alpha_frequent: float = 0.0
    top_k: int = 300
    score_floor: float = 0.0

    def __post_init__(self):
        alphas = (self.alpha_rare, self.alpha_common, self.alpha_frequent)
        if not all(math.isfinite(a) for a in alphas):
            raise InvalidInputError("alphas must be finite")
        if not self.alpha_rare >= self.alpha_common >= self.alpha_frequent:
            raise InvalidInputError("alphas must satisfy rare >= common >= frequent")
        if self.top_k < 1:
            raise InvalidInputError("top_k must be >= 1")
        if not math.isfinite(self.score_floor):
            raise InvalidInputError("score_floor must be finite")

    def alpha(self, group: Group) -> float:
        return (self.alpha_rare, self.alpha_common, self.alpha_frequent)[group]


def rescore_order(
    dets: Sequence[Detection], table: CategoryTable, cfg: RescoreConfig = RescoreConfig()
) -> list[Detection]:
    """Sort by ``score + alpha(group)`` descending.

    Ties fall back to higher raw score, then lower category id, then input
    position, which makes the order total and the operation idempotent.
    """
    offsets = {g: Fraction(cfg.alpha(g)) for g in Group}

    def key(item):
        i, d = item
        return (-(Fraction(d.score) + offsets[table.group(d.category)]), -d.score, d.category, i)

    return [d for _, d in sorted(enumerate(dets), key=key)]


def filter_top_k(ordered: Sequence[Detection], cfg: RescoreConfig = RescoreConfig()) -> list[Detection]:
    """Drop scores below the floor, then keep the first ``top_k`` in the given order."""
    kept = [d for d in ordered if d.score >= cfg.score_floor]
    return kept[: cfg.top_k]


def merge_shared_categories(
    primary: Sequence[Detection], expert: Iterable[Detection], shared: Iterable[int]
) -> list[Detection]:
    """Primary detections plus the expert detections on shared categories."""
    shared = set(shared)
    taken = []
    dropped = 0
    for d in expert:
        if d.category in shared:
            taken.append(d)
        else:
            dropped += 1
    if dropped:
        logger.info("dropped %d expert detections outside the shared categories", dropped)
    return list(primary) + taken


def rescore_per_image(
    dets: Sequence[Detection], table: CategoryTable, cfg: RescoreConfig = RescoreConfig()
) -> list[Detection]:
    """Re-score, order and truncate each image's detections; images in ascending id."""
    by_image: dict[int, list[Detection]] = defaultdict(list)
    for d in dets:
        by_image[d.image_id].append(d)
    out: list[Detection] = []
    for image_id in sorted(by_image):
        out.extend(filter_top_k(rescore_order(by_image[image_id], table, cfg), cfg))
    return out


def detection_from_json(rec, index: int, source: str | None = None) -> Detection:
    try:
        if not isinstance(rec, dict):
            raise ValueError("expected an object")
        bbox = rec["bbox"]
        if len(bbox) != 4:
            raise ValueError("bbox must have 4 coordinates")
        return Detection(
            box=Box(*(float(v) for v in bbox)),
            category=int(rec["category_id"]),
            score=float(rec["score"]),
            source=source if source is not None else str(rec.get("source", "primary")),
            image_id=int(rec["image_id"]),
        )
    except KeyError as exc:
        raise InvalidInputError(f"record {index}: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"record {index}: {exc}") from None


def detection_to_json(d: Detection) -> dict:
    return {
        "image_id": d.image_id,
        "category_id": d.category,
        "bbox": d.box.as_list(),
        "score": d.score,
        "source": d.source,
    }


def load_detections(path, source: str | None = None) -> list[Detection]:
    """Read a detection file; ``source`` overrides any tag stored in it."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(payload, list):
        raise InvalidInputError(f"{path}: expected a JSON list of detections")
    try:
        return [detection_from_json(rec, i, source) for i, rec in enumerate(payload)]
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


def dump_detections(dets: Iterable[Detection], path) -> None:
    Path(path).write_text(json.dumps([detection_to_json(d) for d in dets], indent=1) + "\n")
