import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqloss import CategoryRangeError, InvalidInputError
from eqloss.records import ImageContext
from eqloss.taxonomy import (
    CategoryTable,
    Group,
    below_lambda,
    build_category_table,
    lambda_for_groups,
)


def images(*pos_sets):
    return [ImageContext(i, frozenset(s)) for i, s in enumerate(pos_sets)]


THREE = images({1}, {1, 2}, {1})


def test_three_image_example():
    table = build_category_table(THREE, 2, (1, 2))
    assert table.frequencies == (Fraction(1), Fraction(1, 3))
    assert table.groups == (Group.FREQUENT, Group.RARE)


def test_single_image_is_rare():
    table = build_category_table(images({1}), 1, (1, 2))
    assert table.frequency(1) == 1
    assert table.group(1) == Group.RARE


def test_default_bounds_follow_lvis_convention():
    # LVIS v0.5: rare 1-10 images, common 11-100, frequent > 100
    counts = (1, 10, 11, 100, 101)
    table = CategoryTable(counts, 1000)
    assert table.group_bounds == (10, 100)
    assert [str(g) for g in table.groups] == ["rare", "rare", "common", "common", "frequent"]


def test_negatives_do_not_count_toward_frequency():
    table = build_category_table([ImageContext(0, {1}, {2})], 2)
    assert table.image_counts == (1, 0)


def test_errors():
    with pytest.raises(CategoryRangeError):
        build_category_table(images({3}), 2)
    with pytest.raises(CategoryRangeError):
        build_category_table([ImageContext(0, {1}, {5})], 2)
    with pytest.raises(InvalidInputError):
        build_category_table([], 2)
    with pytest.raises(InvalidInputError):
        build_category_table(THREE, 0)
    with pytest.raises(InvalidInputError):
        build_category_table(THREE, 2, (5, 5))
    with pytest.raises(CategoryRangeError):
        build_category_table(THREE, 2, (1, 2)).frequency(3)


def test_below_lambda_direct_comparisons():
    table = CategoryTable((1, 500), 1000)
    assert below_lambda(table, 1, 0.01)
    assert not below_lambda(table, 2, 0.01)
    with pytest.raises(CategoryRangeError):
        below_lambda(table, 0, 0.5)
    with pytest.raises(InvalidInputError):
        below_lambda(table, 1, 1.5)


def test_below_lambda_is_strict():
    table = CategoryTable((10,), 100)
    assert not below_lambda(table, 1, Fraction(1, 10))
    assert below_lambda(table, 1, Fraction(101, 1000))


def test_lambda_for_groups_examples():
    table = build_category_table(THREE, 2, (1, 2))
    lam = lambda_for_groups(table)
    assert lam == 1
    assert [below_lambda(table, j, lam) for j in (1, 2)] == [False, True]

    all_frequent = CategoryTable((300, 200, 500), 1000)
    lam = lambda_for_groups(all_frequent)
    assert lam == Fraction(1, 5)
    assert not any(below_lambda(all_frequent, j, lam) for j in (1, 2, 3))

    with pytest.raises(InvalidInputError):
        lambda_for_groups(CategoryTable((1, 2), 10))


def test_lambda_for_groups_exhaustive_scan():
    counts = (0, 3, 9, 10, 11, 50, 100, 101, 150, 999)
    table = CategoryTable(counts, 1000)
    lam = lambda_for_groups(table)
    for j in table.categories:
        assert below_lambda(table, j, lam) == (table.group(j) != Group.FREQUENT)


def test_table_json_roundtrip(tmp_path):
    table = build_category_table(THREE, 2, (1, 2))
    table.save(tmp_path / "t.json")
    assert CategoryTable.load(tmp_path / "t.json") == table


image_sets = st.lists(
    st.frozensets(st.integers(1, 6), max_size=4), min_size=1, max_size=30
)


@settings(max_examples=100, deadline=None)
@given(image_sets, st.randoms())
def test_permutation_invariance(pos_sets, rnd):
    imgs = images(*pos_sets)
    shuffled = list(imgs)
    rnd.shuffle(shuffled)
    assert build_category_table(imgs, 6, (2, 5)) == build_category_table(shuffled, 6, (2, 5))


@settings(max_examples=100, deadline=None)
@given(image_sets)
def test_table_invariants(pos_sets):
    table = build_category_table(images(*pos_sets), 6, (2, 5))
    for j in table.categories:
        assert table.frequency(j) == Fraction(table.image_count(j), table.total_images)
    for a, b in itertools.product(table.categories, repeat=2):
        if table.image_count(a) <= table.image_count(b):
            assert table.group(a) <= table.group(b)
    if Group.FREQUENT in table.groups:
        lam = lambda_for_groups(table)
        below = {j for j in table.categories if below_lambda(table, j, lam)}
        assert below == set(table.members(Group.RARE)) | set(table.members(Group.COMMON))
