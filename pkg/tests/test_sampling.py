from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqloss import InvalidInputError
from eqloss.records import ImageContext
from eqloss.sampling import (
    SyntheticConfig,
    SyntheticDataset,
    class_aware_sampler,
    generate_holdout,
    generate_synthetic,
    load_dataset,
    save_dataset,
    zipf_probabilities,
)

SMALL = SyntheticConfig(num_categories=12, feature_dim=4, num_images=60, seed=3)


def toy_dataset(pos_sets) -> SyntheticDataset:
    images = tuple(ImageContext(i, frozenset(s)) for i, s in enumerate(pos_sets))
    n = len(images)
    return SyntheticDataset(
        config=replace(SMALL, num_images=n), split="train", images=images,
        category_means=np.zeros((SMALL.num_categories, 4)),
        features=np.zeros((0, 4)), labels=np.zeros(0, dtype=np.int64),
        image_ids=np.zeros(0, dtype=np.int64), boxes=np.zeros((0, 4)),
        offsets=np.zeros(n + 1, dtype=np.int64),
    )


def check_invariants(ds: SyntheticDataset):
    cfg = ds.config
    C = cfg.num_categories
    assert len(ds.images) == cfg.num_images
    assert ds.features.shape == (ds.num_samples, cfg.feature_dim)
    np.testing.assert_allclose(np.linalg.norm(ds.category_means, axis=1), 1.0)
    for i, ctx in enumerate(ds.images):
        assert not ctx.pos & ctx.neg
        assert all(1 <= j <= C for j in ctx.pos | ctx.neg)
        assert len(ctx.neg) == min(cfg.neg_set_size, C - len(ctx.pos))
        rows = ds.image_rows(i)
        labels = ds.labels[rows]
        assert set(labels[labels > 0].tolist()) == set(ctx.pos)
        assert np.count_nonzero(labels > 0) == cfg.instances_per_image
        assert np.count_nonzero(labels == 0) == cfg.instances_per_image
        assert np.all(ds.image_ids[rows] == ctx.image_id)
        assert len(ctx.gt_boxes) == cfg.instances_per_image
        assert set(ctx.gt_boxes[k][0] for k in range(len(ctx.gt_boxes))) <= set(ds.external_boxes[i])


def test_default_sized_dataset_invariants():
    check_invariants(generate_synthetic(SMALL))


@settings(max_examples=200, deadline=None)
@given(
    st.integers(2, 15), st.integers(1, 5), st.floats(0.1, 3.0), st.integers(1, 4),
    st.integers(1, 12), st.integers(0, 20), st.floats(0, 1), st.integers(0, 2**32),
)
def test_random_config_invariants(C, d, s, k, n, m, miss, seed):
    cfg = SyntheticConfig(num_categories=C, feature_dim=d, zipf_exponent=s, instances_per_image=k,
                          num_images=n, neg_set_size=m, missing_rate=miss, seed=seed)
    check_invariants(generate_synthetic(cfg))


def test_determinism_byte_for_byte(tmp_path):
    a = save_dataset(generate_synthetic(SMALL), tmp_path / "a")
    b = save_dataset(generate_synthetic(SMALL), tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    c = save_dataset(generate_synthetic(replace(SMALL, seed=4)), tmp_path / "c")
    assert a["features"].read_bytes() != c["features"].read_bytes()


def test_roundtrip(tmp_path):
    ds = generate_synthetic(SMALL)
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.config == ds.config
    assert back.images == ds.images
    assert back.external_boxes == ds.external_boxes
    for field in ("features", "labels", "image_ids", "boxes", "offsets", "category_means"):
        np.testing.assert_array_equal(getattr(back, field), getattr(ds, field))


def test_feature_csv_header(tmp_path):
    paths = save_dataset(generate_synthetic(SMALL), tmp_path)
    header = paths["features"].read_text().splitlines()[0]
    assert header == "image_id,label,x1,y1,x2,y2,f0,f1,f2,f3"


def test_splits_share_means_but_not_images():
    train = generate_synthetic(SMALL)
    held = generate_synthetic(SMALL, split="holdout")
    np.testing.assert_array_equal(train.category_means, held.category_means)
    assert not np.array_equal(train.features, held.features)


def test_holdout_is_balanced():
    held = generate_holdout(SMALL, per_category=7)
    counts = np.bincount(held.labels, minlength=SMALL.num_categories + 1)
    assert counts[0] == 7 * SMALL.num_categories
    assert np.all(counts[1:] == 7)


def test_zipf_limit_near_uniform():
    p = zipf_probabilities(2, 1e-6)
    assert p[1] / p[0] == pytest.approx(2 ** -1e-6)
    assert p[0] == pytest.approx(0.5, abs=1e-6)


def test_zipf_head_to_tail_ratio():
    cfg = SyntheticConfig(num_categories=100, zipf_exponent=1.2, num_images=2000,
                          instances_per_image=4, feature_dim=2, seed=11)
    ds = generate_synthetic(cfg)
    counts = np.bincount(ds.labels, minlength=101)[1:]
    expected = 100 ** 1.2
    assert expected == pytest.approx(251.19, abs=0.01)
    assert expected / 2 <= counts[0] / counts[-1] <= expected * 2
    # chi-square sanity check against the analytic Zipf mass over the head categories
    p = zipf_probabilities(100, 1.2)
    n = counts.sum()
    head = slice(0, 20)
    chi2 = np.sum((counts[head] - n * p[head]) ** 2 / (n * p[head]))
    assert chi2 < 45  # chi-square, 20 dof, p ~ 0.001


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SyntheticConfig(zipf_exponent=0)
    with pytest.raises(InvalidInputError):
        SyntheticConfig(noise_sigma=0)
    with pytest.raises(InvalidInputError):
        SyntheticConfig(instances_per_image=0)
    with pytest.raises(InvalidInputError):
        SyntheticConfig.from_dict({"bogus": 1})
    with pytest.raises(InvalidInputError):
        generate_synthetic(SMALL, split="test")


def test_neg_set_truncated_to_complement():
    cfg = SyntheticConfig(num_categories=3, feature_dim=2, num_images=20, neg_set_size=10, seed=1)
    for ctx in generate_synthetic(cfg).images:
        assert ctx.neg == frozenset({1, 2, 3}) - ctx.pos


def test_missing_objects_are_covered_by_external_boxes():
    from eqloss.ignore import ignore_sample_weights
    from eqloss.records import Box

    cfg = replace(SMALL, missing_rate=1.0, num_images=30)
    ds = generate_synthetic(cfg)
    for i, ext in enumerate(ds.external_boxes):
        rows = ds.image_rows(i)
        pairs = [(Box(*b), int(c)) for b, c in zip(ds.boxes[rows], ds.labels[rows])]
        w = ignore_sample_weights(pairs, ext)
        assert [x for x, (_, c) in zip(w, pairs) if c == 0] == [0.5] * cfg.instances_per_image


# --- class-aware sampler ----------------------------------------------------

def test_bijection_case_uniform_over_images():
    ds = toy_dataset([{1}, {2}, {3}, {4}])
    _, ids = class_aware_sampler(ds, 0).draw(40000)
    freq = np.bincount(ids, minlength=4) / 40000
    np.testing.assert_allclose(freq, 0.25, atol=0.01)


def test_single_rare_image_probability():
    ds = toy_dataset([{1}] * 99 + [{2}])
    _, ids = class_aware_sampler(ds, 0).draw(100_000)
    assert np.mean(ids == 99) == pytest.approx(0.5, abs=0.01)


def test_stage_one_uniform_over_present_categories():
    ds = generate_synthetic(SyntheticConfig(num_categories=30, feature_dim=2, num_images=200, seed=5))
    sampler = class_aware_sampler(ds, 9)
    cats, ids = sampler.draw(100_000)
    present = sorted({j for ctx in ds.images for j in ctx.pos})
    assert sampler.categories.tolist() == present
    freq = np.array([np.mean(cats == j) for j in present])
    assert np.max(np.abs(freq - 1 / len(present))) < 0.01
    valid = {ctx.image_id for ctx in ds.images}
    assert set(ids.tolist()) <= valid
    for c, i in zip(cats[:2000], ids[:2000]):
        assert c in ds.images[i].pos


def test_stream_independent_of_consumption_pattern():
    ds = generate_synthetic(SMALL)
    a = class_aware_sampler(ds, 1)
    chunks = [a.draw(n)[1] for n in (1, 7, 4096, 3, 5000)]
    b = class_aware_sampler(ds, 1)
    np.testing.assert_array_equal(np.concatenate(chunks), b.draw(sum((1, 7, 4096, 3, 5000)))[1])
    it = iter(class_aware_sampler(ds, 1))
    assert [next(it) for _ in range(100)] == np.concatenate(chunks)[:100].tolist()


def test_sampler_errors():
    with pytest.raises(InvalidInputError):
        class_aware_sampler(toy_dataset([]), 0)
    with pytest.raises(InvalidInputError):
        class_aware_sampler(toy_dataset([set(), set()]), 0)
