"""Category metadata: image frequencies, frequency groups and the lambda test.

Frequencies are kept as exact fractions ``count / total_images`` so that
threshold comparisons are reproducible; they are converted to floats only
when a vectorised mask is requested.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import CategoryRangeError, InvalidInputError
from .records import ImageContext

DEFAULT_GROUP_BOUNDS = (10, 100)

Threshold = Union[Fraction, float, int]


class Group(enum.IntEnum):
    RARE = 0
    COMMON = 1
    FREQUENT = 2

    def __str__(self):
        return self.name.lower()

    @classmethod
    def parse(cls, name: str) -> Group:
        try:
            return cls[name.upper()]
        except KeyError:
            raise InvalidInputError(f"unknown frequency group {name!r}") from None


def assign_group(count: int, group_bounds=DEFAULT_GROUP_BOUNDS) -> Group:
    t_rare, t_common = group_bounds
    if count <= t_rare:
        return Group.RARE
    if count <= t_common:
        return Group.COMMON
    return Group.FREQUENT


def check_group_bounds(group_bounds) -> tuple[int, int]:
    try:
        t_rare, t_common = (int(b) for b in group_bounds)
    except (TypeError, ValueError):
        raise InvalidInputError(f"group_bounds must be two integers, got {group_bounds!r}") from None
    if not 0 < t_rare < t_common:
        raise InvalidInputError(
            f"group_bounds must satisfy 0 < t_rare < t_common, got {group_bounds!r}"
        )
    return t_rare, t_common


@dataclass(frozen=True)
class CategoryTable:
    """Image counts and frequency groups for categories ``1..C``.

    Per-category tuples are stored 0-based (``image_counts[j - 1]`` belongs to
    category ``j``); use the accessor methods to index by category id.
    """

    image_counts: tuple[int, ...]
    total_images: int
    group_bounds: tuple[int, int] = DEFAULT_GROUP_BOUNDS

    def __post_init__(self):
        counts = tuple(int(c) for c in self.image_counts)
        object.__setattr__(self, "image_counts", counts)
        object.__setattr__(self, "group_bounds", check_group_bounds(self.group_bounds))
        if not counts:
            raise InvalidInputError("a category table needs at least one category")
        if self.total_images < 1:
            raise InvalidInputError("total_images must be positive")
        if any(c < 0 or c > self.total_images for c in counts):
            raise InvalidInputError("image counts must lie in [0, total_images]")

    @property
    def num_categories(self) -> int:
        return len(self.image_counts)

    @property
    def categories(self) -> range:
        return range(1, self.num_categories + 1)

    def _check(self, j: int) -> int:
        if not 1 <= j <= self.num_categories:
            raise CategoryRangeError(
                f"category {j} outside 1..{self.num_categories}"
            )
        return j - 1

    def image_count(self, j: int) -> int:
        return self.image_counts[self._check(j)]

    def frequency(self, j: int) -> Fraction:
        return Fraction(self.image_counts[self._check(j)], self.total_images)

    def group(self, j: int) -> Group:
        return assign_group(self.image_counts[self._check(j)], self.group_bounds)

    @property
    def frequencies(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.total_images) for c in self.image_counts)

    @property
    def groups(self) -> tuple[Group, ...]:
        return tuple(assign_group(c, self.group_bounds) for c in self.image_counts)

    def members(self, group: Group) -> list[int]:
        return [j for j, g in zip(self.categories, self.groups) if g == group]

    def group_sizes(self) -> dict[str, int]:
        groups = self.groups
        return {str(g): sum(1 for x in groups if x == g) for g in Group}

    def below_lambda_mask(self, lam: Threshold) -> np.ndarray:
        """Boolean array over categories ``1..C``: ``f_j < lam``, compared exactly."""
        lam = _as_threshold(lam)
        # count / total < lam  <=>  count < lam * total, all in exact rationals
        bound = lam * self.total_images
        return np.array([c < bound for c in self.image_counts], dtype=bool)

    def to_json(self) -> dict:
        return {
            "num_categories": self.num_categories,
            "total_images": self.total_images,
            "group_bounds": list(self.group_bounds),
            "image_counts": list(self.image_counts),
            "groups": [str(g) for g in self.groups],
        }

    @classmethod
    def from_json(cls, payload: dict) -> CategoryTable:
        try:
            table = cls(
                image_counts=tuple(payload["image_counts"]),
                total_images=int(payload["total_images"]),
                group_bounds=tuple(payload.get("group_bounds", DEFAULT_GROUP_BOUNDS)),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed category table: {exc}") from exc
        if "num_categories" in payload and payload["num_categories"] != table.num_categories:
            raise InvalidInputError("num_categories disagrees with image_counts")
        if "groups" in payload and payload["groups"] != [str(g) for g in table.groups]:
            raise InvalidInputError("stored groups disagree with image counts and bounds")
        return table

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> CategoryTable:
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: malformed JSON ({exc})") from exc
        return cls.from_json(payload)


def _as_threshold(lam: Threshold) -> Fraction:
    try:
        lam = Fraction(lam)
    except (TypeError, ValueError, OverflowError):
        raise InvalidInputError(f"lambda must be a finite number, got {lam!r}") from None
    if not 0 <= lam <= 1:
        raise InvalidInputError(f"lambda must lie in [0, 1], got {float(lam)}")
    return lam


def build_category_table(
    annotations: Iterable[ImageContext],
    num_categories: int,
    group_bounds=DEFAULT_GROUP_BOUNDS,
) -> CategoryTable:
    """Count, per category, the distinct images whose positive set contains it."""
    if num_categories < 1:
        raise InvalidInputError("num_categories must be >= 1")
    bounds = check_group_bounds(group_bounds)
    counts = [0] * num_categories
    seen: set[int] = set()
    for ctx in annotations:
        if ctx.image_id in seen:
            raise InvalidInputError(f"duplicate image id {ctx.image_id}")
        seen.add(ctx.image_id)
        for j in ctx.pos | ctx.neg:
            if not 1 <= j <= num_categories:
                raise CategoryRangeError(
                    f"image {ctx.image_id}: category {j} outside 1..{num_categories}"
                )
        for j in ctx.pos:
            counts[j - 1] += 1
    if not seen:
        raise InvalidInputError("cannot build a category table from zero images")
    return CategoryTable(tuple(counts), len(seen), bounds)


def below_lambda(table: CategoryTable, j: int, lam: Threshold) -> bool:
    return table.frequency(j) < _as_threshold(lam)


def lambda_for_groups(table: CategoryTable) -> Fraction:
    """Smallest frequency among frequent categories.

    With this threshold ``below_lambda`` holds for every rare and common
    category and for no frequent one (as long as no frequent category shares
    its frequency with a non-frequent one).
    """
    frequent = [f for f, g in zip(table.frequencies, table.groups) if g == Group.FREQUENT]
    if not frequent:
        raise InvalidInputError("table has no frequent category to anchor lambda")
    return min(frequent)
