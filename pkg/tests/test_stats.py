import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqloss.records import ImageContext
from eqloss.sampling import SyntheticConfig, generate_synthetic
from eqloss.stats import (
    CSV_COLUMNS,
    ValidSampleStats,
    collect_valid_stats,
    dataset_valid_stats,
    frequency_order,
    max_group_ratio,
    ratio_series,
    read_stats_csv,
    write_gnuplot,
    write_stats_csv,
)
from eqloss.taxonomy import CategoryTable, Group, build_category_table, lambda_for_groups


def test_hand_example():
    # category 2 is below lambda, 1 is not
    table = CategoryTable((9, 1), 10)
    stats = collect_valid_stats([1], [ImageContext(0, {1})], table, 0.5)
    assert stats.valid_positive == (1, 0)
    assert stats.valid_negative == (0, 0)
    assert stats.ratio(1) == 0.0
    assert math.isinf(stats.ratio(2))


def test_lambda_zero_counts():
    table = CategoryTable((3, 1, 1), 4)
    contexts = [ImageContext(0, {1, 2}), ImageContext(1, {1, 3})]
    labels = [1, 2, 0, 1, 3, 0]
    ctx_rows = [contexts[0]] * 3 + [contexts[1]] * 3
    stats = collect_valid_stats(labels, ctx_rows, table, 0)
    assert stats.valid_positive == (2, 1, 1)
    assert stats.valid_negative == (4, 5, 5)


def test_ratio_series_ties_and_infinity():
    table = CategoryTable((2, 2, 2), 4)
    stats = ValidSampleStats((1, 0, 2), (3, 5, 4))
    series = ratio_series(stats, table)
    assert [j for j, _ in series] == [1, 2, 3]
    assert series[0][1] == 3.0 and math.isinf(series[1][1]) and series[2][1] == 2.0


def test_frequency_order_descending():
    table = CategoryTable((1, 5, 3, 5), 10)
    assert frequency_order(table) == [2, 4, 3, 1]


@pytest.fixture(scope="module")
def default_stats():
    ds = generate_synthetic(SyntheticConfig(num_categories=40, num_images=400, feature_dim=2, seed=1))
    table = build_category_table(ds.images, 40, (5, 40))
    lam = lambda_for_groups(table)
    return ds, table, dataset_valid_stats(ds, table, 0), dataset_valid_stats(ds, table, lam)


def test_lambda_zero_totals(default_stats):
    ds, table, plain, _ = default_stats
    counts = np.bincount(ds.labels, minlength=41)[1:]
    assert plain.valid_positive == tuple(counts.tolist())
    for j in table.categories:
        assert plain.valid_negative[j - 1] == ds.num_samples - counts[j - 1]
    assert sum(plain.valid_positive) + sum(plain.valid_negative) == ds.num_samples * 40


def test_positives_independent_of_lambda_and_negatives_monotone(default_stats):
    ds, table, plain, _ = default_stats
    prev = plain
    for lam in (0.01, 0.02, 0.05, 0.1, 0.5, 1.0):
        cur = dataset_valid_stats(ds, table, lam)
        assert cur.valid_positive == plain.valid_positive
        assert all(a <= b for a, b in zip(cur.valid_negative, prev.valid_negative))
        prev = cur


def test_rare_ratio_drops_under_auto_lambda(default_stats):
    _, table, plain, eql = default_stats
    assert max_group_ratio(eql, table, Group.RARE) < max_group_ratio(plain, table, Group.RARE)


def test_csv_roundtrip(tmp_path, default_stats):
    _, table, _, eql = default_stats
    path = tmp_path / "s.csv"
    write_stats_csv(eql, table, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = read_stats_csv(path)
    assert [r["category_id"] for r in rows] == frequency_order(table)
    for r in rows:
        j = r["category_id"]
        assert r["valid_pos"] == eql.valid_positive[j - 1]
        assert r["valid_neg"] == eql.valid_negative[j - 1]
        assert r["group"] == str(table.group(j))
        assert r["ratio"] == eql.ratio(j)


def test_inf_written_as_string(tmp_path):
    table = CategoryTable((2, 0), 2)
    stats = ValidSampleStats((2, 0), (0, 2))
    write_stats_csv(stats, table, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[2].endswith(",inf")
    write_gnuplot(stats, table, tmp_path / "s.dat")
    assert (tmp_path / "s.dat").read_text().splitlines()[2] == "2 2 0 2 inf"


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_random_images_properties(data):
    C = data.draw(st.integers(1, 6))
    n_img = data.draw(st.integers(1, 6))
    labels, contexts, images = [], [], []
    for i in range(n_img):
        pos = data.draw(st.sets(st.integers(1, C), max_size=C))
        neg = data.draw(st.sets(st.sampled_from(sorted(set(range(1, C + 1)) - pos)), max_size=C)) \
            if len(pos) < C else set()
        ctx = ImageContext(i, pos, neg)
        images.append(ctx)
        for c in data.draw(st.lists(st.sampled_from([0] + sorted(pos)), max_size=4)):
            labels.append(c)
            contexts.append(ctx)
    table = build_category_table(images, C, (1, 2))
    lam = data.draw(st.sampled_from([0, 0.25, 0.5, 1.0]))
    stats = collect_valid_stats(labels, contexts, table, lam)
    raw = np.bincount(np.array(labels, dtype=np.int64), minlength=C + 1)[1:]
    assert stats.valid_positive == tuple(raw.tolist())
    plain = collect_valid_stats(labels, contexts, table, 0)
    assert all(a <= b for a, b in zip(stats.valid_negative, plain.valid_negative))
