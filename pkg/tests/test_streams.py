import numpy as np
import pytest

from mlmc_sched.streams import RandomStream, split_stream

CHI2_99_CRIT_1PCT = 134.642  # chi-squared 0.99 quantile, 99 dof


def test_same_path_identical_sequence():
    root = RandomStream(123)
    a1 = split_stream(root, "a").generator().random(100)
    a2 = split_stream(root, "a").generator().random(100)
    np.testing.assert_array_equal(a1, a2)


def test_distinct_ids_differ():
    root = RandomStream(123)
    a = root.split("a").generator().random(100)
    b = root.split("b").generator().random(100)
    assert not np.array_equal(a, b)


def test_chi_squared_independence():
    root = RandomStream(99)
    x = root.split("a").generator().random(10_000)
    y = root.split("b").generator().random(10_000)
    counts, _, _ = np.histogram2d(x, y, bins=10, range=[[0, 1], [0, 1]])
    expected = len(x) / 100.0
    stat = ((counts - expected) ** 2 / expected).sum()
    assert stat < CHI2_99_CRIT_1PCT


def test_nested_splits_commute_with_order():
    root = RandomStream(7)
    five_first = root.split("lvl", 5).generator().random(8)
    three = root.split("lvl", 3).generator().random(8)
    five_again = root.split("lvl", 5).generator().random(8)
    np.testing.assert_array_equal(five_first, five_again)
    assert not np.array_equal(five_first, three)


def test_int_and_string_ids_are_distinct_namespaces():
    root = RandomStream(1)
    assert not np.array_equal(
        root.split(1).generator().random(4), root.split("1").generator().random(4)
    )


def test_root_seed_changes_everything():
    a = RandomStream(1).split("x").generator().random(16)
    b = RandomStream(2).split("x").generator().random(16)
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("ids", [(), ("a",), ("a", 3, "noise")])
def test_split_is_pure(ids):
    root = RandomStream(42)
    s1 = root.split(*ids)
    s2 = root.split(*ids)
    assert s1 == s2
    assert s1.path == ids
