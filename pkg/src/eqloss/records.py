"""Plain records shared by every module, and the annotation JSON format.

Annotation files are a JSON list with one object per image::

    [{"id": 0,
      "pos_categories": [1, 7],
      "neg_categories": [3],
      "boxes": [[x1, y1, x2, y2, category], ...]},
     ...]

Category ids are ``1..C``; ``0`` is background and never appears here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InvalidInputError

ANNOTATION_KEYS = ("id", "pos_categories", "neg_categories", "boxes")


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in coords):
            raise InvalidInputError(f"non-finite box coordinates {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidInputError(f"box corners out of order: {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def shifted(self, dx: float, dy: float) -> Box:
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class ImageContext:
    """Per-image annotation: positive set, negative set and boxes."""

    image_id: int
    pos: frozenset[int]
    neg: frozenset[int] = frozenset()
    gt_boxes: tuple[tuple[Box, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pos", frozenset(self.pos))
        object.__setattr__(self, "neg", frozenset(self.neg))
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        if self.pos & self.neg:
            raise InvalidInputError(
                f"image {self.image_id}: categories {sorted(self.pos & self.neg)} "
                "are both positive and negative"
            )

    @property
    def annotated(self) -> frozenset[int]:
        return self.pos | self.neg


@dataclass(frozen=True)
class LabeledSample:
    """One proposal: feature vector, assigned category (0 = background), owner image."""

    image_id: int
    label: int
    feature: np.ndarray = field(repr=False)
    box: Box | None = None


def image_to_json(ctx: ImageContext) -> dict:
    return {
        "id": int(ctx.image_id),
        "pos_categories": sorted(int(c) for c in ctx.pos),
        "neg_categories": sorted(int(c) for c in ctx.neg),
        "boxes": [[*box.as_list(), int(cat)] for box, cat in ctx.gt_boxes],
    }


def image_from_json(record: dict, index: int = 0) -> ImageContext:
    if not isinstance(record, dict):
        raise InvalidInputError(f"record {index}: expected an object")
    missing = [k for k in ANNOTATION_KEYS if k not in record]
    if missing:
        raise InvalidInputError(f"record {index}: missing fields {missing}")
    try:
        boxes = []
        for raw in record["boxes"]:
            if len(raw) != 5:
                raise InvalidInputError(
                    f"record {index}: box entries must be [x1, y1, x2, y2, category]"
                )
            boxes.append((Box(*(float(v) for v in raw[:4])), int(raw[4])))
        return ImageContext(
            image_id=int(record["id"]),
            pos=frozenset(int(c) for c in record["pos_categories"]),
            neg=frozenset(int(c) for c in record["neg_categories"]),
            gt_boxes=tuple(boxes),
        )
    except (TypeError, ValueError) as exc:
        if str(exc).startswith(f"record {index}:"):
            raise
        raise InvalidInputError(f"record {index}: {exc}") from exc


def dump_annotations(images: Iterable[ImageContext], path) -> None:
    payload = [image_to_json(ctx) for ctx in images]
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_annotations(path) -> list[ImageContext]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(payload, list):
        raise InvalidInputError(f"{path}: expected a JSON list of images")
    try:
        return [image_from_json(rec, i) for i, rec in enumerate(payload)]
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc
