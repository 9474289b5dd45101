"""Synthetic long-tail datasets and the class-aware image resampler.

Dataset files (``save_dataset`` / ``load_dataset``), format version 1:

``dataset.json``
    manifest: format name, version, split, generating config and the
    category means.
``annotations.json``
    per-image annotations, see :mod:`eqloss.records`.
``external.json``
    the external ground-truth box set in the same per-image format; only
    its ``boxes`` field is meaningful.
``features.csv``
    one row per sample: ``image_id,label,x1,y1,x2,y2,f0,...,f{d-1}``.
    ``label`` 0 is background; floats are written with 17 significant digits
    so they round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import InvalidInputError
from .records import Box, ImageContext, LabeledSample, dump_annotations, load_annotations

FORMAT_NAME = "eqloss-synthetic"
FORMAT_VERSION = 1

_MEANS_KEY = 0
_SPLIT_KEYS = {"train": 1, "holdout": 2}

# side of the square scene that synthetic unit boxes are scattered in
SCENE_SIZE = 8.0
# offset of a background proposal from the unannotated object it covers;
# a 0.1 shift of a unit box gives IoU 0.81 / 1.19 ~= 0.68
_MISS_JITTER = 0.1


@dataclass(frozen=True)
class SyntheticConfig:
    num_categories: int = 100
    feature_dim: int = 32
    zipf_exponent: float = 1.2
    instances_per_image: int = 4
    num_images: int = 2000
    noise_sigma: float = 0.2
    neg_set_size: int = 5
    # fraction of background proposals that actually sit on an object whose
    # category is missing from the annotations (but present in the external boxes)
    missing_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_categories < 1:
            raise InvalidInputError("num_categories must be >= 1")
        if self.feature_dim < 1:
            raise InvalidInputError("feature_dim must be >= 1")
        if not self.zipf_exponent > 0:
            raise InvalidInputError("zipf_exponent must be > 0")
        if self.instances_per_image < 1:
            raise InvalidInputError("instances_per_image must be >= 1")
        if self.num_images < 1:
            raise InvalidInputError("num_images must be >= 1")
        if not self.noise_sigma > 0:
            raise InvalidInputError("noise_sigma must be > 0")
        if self.neg_set_size < 0:
            raise InvalidInputError("neg_set_size must be >= 0")
        if not 0 <= self.missing_rate <= 1:
            raise InvalidInputError("missing_rate must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**d)


def zipf_probabilities(num_categories: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, num_categories + 1, dtype=np.float64)
    p = ranks ** (-exponent)
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Images plus a flat, image-grouped sample table.

    Samples of image ``images[i]`` occupy rows ``offsets[i]:offsets[i + 1]``
    of ``features``, ``labels``, ``image_ids`` and ``boxes``.
    """

    config: SyntheticConfig
    split: str
    images: tuple[ImageContext, ...]
    category_means: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    image_ids: np.ndarray
    boxes: np.ndarray
    offsets: np.ndarray
    external_boxes: tuple[tuple[Box, ...], ...] = field(default=())

    @property
    def num_categories(self) -> int:
        return self.config.num_categories

    @property
    def num_samples(self) -> int:
        return len(self.labels)

    @property
    def samples(self) -> list[LabeledSample]:
        return [
            LabeledSample(int(i), int(c), f, Box(*b))
            for i, c, f, b in zip(self.image_ids, self.labels, self.features, self.boxes)
        ]

    def sample_contexts(self) -> list[ImageContext]:
        """The owning ImageContext of every sample, row-aligned."""
        counts = np.diff(self.offsets)
        out: list[ImageContext] = []
        for ctx, n in zip(self.images, counts):
            out.extend([ctx] * int(n))
        return out

    def image_rows(self, index: int) -> slice:
        return slice(int(self.offsets[index]), int(self.offsets[index + 1]))


def _rng(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def category_means(cfg: SyntheticConfig) -> np.ndarray:
    """C unit vectors drawn uniformly on the sphere; depends only on seed, C and d."""
    g = _rng(cfg.seed, _MEANS_KEY).standard_normal((cfg.num_categories, cfg.feature_dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _unit_box(rng) -> np.ndarray:
    x, y = rng.uniform(0.0, SCENE_SIZE - 1.0, size=2)
    return np.array([x, y, x + 1.0, y + 1.0])


class _Builder:
    def __init__(self, cfg: SyntheticConfig, rng: np.random.Generator, means: np.ndarray):
        self.cfg = cfg
        self.rng = rng
        self.means = means
        self.zipf = zipf_probabilities(cfg.num_categories, cfg.zipf_exponent)
        self.images: list[ImageContext] = []
        self.external: list[tuple[Box, ...]] = []
        self.rows: list[tuple[int, int, np.ndarray, np.ndarray]] = []
        self.offsets = [0]

    def add_image(self, labels: list[int]):
        cfg, rng = self.cfg, self.rng
        image_id = len(self.images)
        pos = set(labels)
        complement = np.array([j for j in range(1, cfg.num_categories + 1) if j not in pos])
        m = min(cfg.neg_set_size, len(complement))
        neg = set(rng.choice(complement, size=m, replace=False).tolist()) if m else set()

        gt = []
        for c in labels:
            box = _unit_box(rng)
            feat = self.means[c - 1] + cfg.noise_sigma * rng.standard_normal(cfg.feature_dim)
            self.rows.append((image_id, c, feat, box))
            gt.append((Box(*box), c))
        external = [b for b, _ in gt]

        unannotated = [j for j in range(1, cfg.num_categories + 1) if j not in pos and j not in neg]
        for _ in labels:
            feat = cfg.noise_sigma * rng.standard_normal(cfg.feature_dim)
            box = _unit_box(rng)
            if unannotated and rng.random() < cfg.missing_rate:
                p = self.zipf[np.array(unannotated) - 1]
                j = int(rng.choice(unannotated, p=p / p.sum()))
                feat = feat + self.means[j - 1]
                external.append(Box(*box))
                box = box + np.tile(rng.choice([-_MISS_JITTER, _MISS_JITTER], size=2), 2)
            self.rows.append((image_id, 0, feat, box))

        self.images.append(ImageContext(image_id, frozenset(pos), frozenset(neg), tuple(gt)))
        self.external.append(tuple(external))
        self.offsets.append(len(self.rows))

    def build(self, split: str) -> SyntheticDataset:
        d = self.cfg.feature_dim
        n = len(self.rows)
        return SyntheticDataset(
            config=self.cfg,
            split=split,
            images=tuple(self.images),
            category_means=self.means,
            features=np.array([r[2] for r in self.rows]).reshape(n, d),
            labels=np.array([r[1] for r in self.rows], dtype=np.int64),
            image_ids=np.array([r[0] for r in self.rows], dtype=np.int64),
            boxes=np.array([r[3] for r in self.rows]).reshape(n, 4),
            offsets=np.array(self.offsets, dtype=np.int64),
            external_boxes=tuple(self.external),
        )


def generate_synthetic(cfg: SyntheticConfig, split: str = "train") -> SyntheticDataset:
    """Long-tail dataset: ``k`` Zipf-distributed instances plus ``k`` background samples per image.

    ``split`` selects an independent image stream; category means are shared
    by every split of the same seed.
    """
    if split not in _SPLIT_KEYS:
        raise InvalidInputError(f"split must be one of {sorted(_SPLIT_KEYS)}")
    rng = _rng(cfg.seed, _SPLIT_KEYS[split])
    builder = _Builder(cfg, rng, category_means(cfg))
    for _ in range(cfg.num_images):
        labels = (rng.choice(cfg.num_categories, size=cfg.instances_per_image, p=builder.zipf) + 1).tolist()
        builder.add_image(labels)
    return builder.build(split)


def generate_holdout(cfg: SyntheticConfig, per_category: int = 20) -> SyntheticDataset:
    """Category-balanced evaluation set sharing ``cfg``'s category means.

    Every category gets ``per_category`` single-instance images, each with one
    background sample, so per-category accuracy is estimated from the same
    number of samples for rare and frequent categories alike.
    """
    if per_category < 1:
        raise InvalidInputError("per_category must be >= 1")
    holdout_cfg = SyntheticConfig(**{**asdict(cfg), "instances_per_image": 1, "missing_rate": 0.0})
    rng = _rng(cfg.seed, _SPLIT_KEYS["holdout"])
    builder = _Builder(holdout_cfg, rng, category_means(cfg))
    for j in range(1, cfg.num_categories + 1):
        for _ in range(per_category):
            builder.add_image([j])
    return builder.build("holdout")


class ClassAwareSampler:
    """Infinite deterministic stream of image ids.

    Each draw picks a category uniformly among categories present in at least
    one image, then an image uniformly among the images containing it.
    Draws are generated in fixed-size blocks, so the stream does not depend on
    how the caller consumes it.
    """

    block = 4096

    def __init__(self, dataset: SyntheticDataset, seed: int):
        by_category: dict[int, list[int]] = {}
        for ctx in dataset.images:
            for j in ctx.pos:
                by_category.setdefault(j, []).append(ctx.image_id)
        if not by_category:
            raise InvalidInputError("class-aware sampling needs at least one positive image")
        self.categories = np.array(sorted(by_category), dtype=np.int64)
        members = [sorted(by_category[j]) for j in self.categories]
        self._sizes = np.array([len(m) for m in members], dtype=np.int64)
        self._starts = np.concatenate([[0], np.cumsum(self._sizes)[:-1]])
        self._flat = np.concatenate([np.array(m, dtype=np.int64) for m in members])
        self._rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
        self._cats = np.empty(0, dtype=np.int64)
        self._ids = np.empty(0, dtype=np.int64)

    def _refill(self):
        k = self._rng.integers(len(self.categories), size=self.block)
        u = self._rng.random(self.block)
        pick = np.minimum((u * self._sizes[k]).astype(np.int64), self._sizes[k] - 1)
        self._cats = np.concatenate([self._cats, self.categories[k]])
        self._ids = np.concatenate([self._ids, self._flat[self._starts[k] + pick]])

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` draws as ``(stage-1 categories, image ids)``."""
        while len(self._ids) < n:
            self._refill()
        cats, ids = self._cats[:n], self._ids[:n]
        self._cats, self._ids = self._cats[n:], self._ids[n:]
        return cats, ids

    def __iter__(self) -> Iterator[int]:
        while True:
            _, ids = self.draw(self.block)
            yield from ids.tolist()


def class_aware_sampler(dataset: SyntheticDataset, seed: int) -> ClassAwareSampler:
    if not dataset.images:
        raise InvalidInputError("cannot sample from an empty dataset")
    return ClassAwareSampler(dataset, seed)


def save_dataset(dataset: SyntheticDataset, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": out / "dataset.json",
        "annotations": out / "annotations.json",
        "external": out / "external.json",
        "features": out / "features.csv",
    }
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "split": dataset.split,
        "config": asdict(dataset.config),
        "category_means": dataset.category_means.tolist(),
        "files": {k: p.name for k, p in paths.items() if k != "manifest"},
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=1) + "\n")
    dump_annotations(dataset.images, paths["annotations"])
    dump_annotations(
        (ImageContext(ctx.image_id, frozenset(), frozenset(), tuple((b, 0) for b in ext))
         for ctx, ext in zip(dataset.images, dataset.external_boxes)),
        paths["external"],
    )
    d = dataset.config.feature_dim
    header = ",".join(["image_id", "label", "x1", "y1", "x2", "y2"] + [f"f{i}" for i in range(d)])
    table = np.column_stack([dataset.image_ids, dataset.labels, dataset.boxes, dataset.features])
    fmt = ["%d", "%d"] + ["%.17g"] * (4 + d)
    np.savetxt(paths["features"], table, fmt=fmt, delimiter=",", header=header, comments="")
    return paths


def load_dataset(in_dir) -> SyntheticDataset:
    root = Path(in_dir)
    try:
        manifest = json.loads((root / "dataset.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{root}: cannot read dataset manifest ({exc})") from exc
    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise InvalidInputError(f"{root}: unsupported dataset format {manifest.get('format')!r} "
                                f"version {manifest.get('version')!r}")
    cfg = SyntheticConfig.from_dict(manifest["config"])
    files = manifest["files"]
    images = load_annotations(root / files["annotations"])
    external = [tuple(b for b, _ in ctx.gt_boxes) for ctx in load_annotations(root / files["external"])]
    table = np.loadtxt(root / files["features"], delimiter=",", skiprows=1, ndmin=2)
    image_ids = table[:, 0].astype(np.int64)
    index = {ctx.image_id: i for i, ctx in enumerate(images)}
    counts = np.bincount([index[int(i)] for i in image_ids], minlength=len(images))
    return SyntheticDataset(
        config=cfg,
        split=manifest["split"],
        images=tuple(images),
        category_means=np.array(manifest["category_means"], dtype=np.float64),
        features=table[:, 6:].copy(),
        labels=table[:, 1].astype(np.int64),
        image_ids=image_ids,
        boxes=table[:, 2:6].copy(),
        offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        external_boxes=tuple(external),
    )
