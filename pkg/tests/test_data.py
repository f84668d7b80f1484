import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minleaf.data import (
    Dataset,
    DataError,
    SplitSpec,
    compute_epsilon,
    load_bundled,
    load_csv,
    min_max_normalize,
    split_dataset,
    split_indices,
    write_csv,
)

from conftest import make_ds, small_datasets


def _csv(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_numeric_column_is_min_max_scaled(tmp_path):
    ds = load_csv(_csv(tmp_path, "a,y\n10,A\n20,B\n30,A\n40,B\n"))
    np.testing.assert_allclose(ds.features[:, 0], [0, 1 / 3, 2 / 3, 1])
    assert ds.class_names == ("A", "B")
    assert list(ds.labels) == [0, 1, 0, 1]


def test_constant_column_maps_to_zero(tmp_path):
    ds = load_csv(_csv(tmp_path, "a,b,y\n7,1,A\n7,2,B\n7,3,A\n"))
    assert list(ds.features[:, 0]) == [0, 0, 0]


def test_ordinal_categories_follow_first_appearance(tmp_path):
    ds = load_csv(_csv(tmp_path, "color,y\nred,A\ngreen,B\nblue,A\n"))
    assert list(ds.features[:, 0]) == [0, 0.5, 1]


def test_one_hot_encoding(tmp_path):
    ds = load_csv(_csv(tmp_path, "color,n,y\nred,1,A\ngreen,2,B\nred,3,A\n"), encoding="one_hot")
    assert ds.feature_names == ("color=red", "color=green", "n")
    np.testing.assert_array_equal(ds.features[:, :2], [[1, 0], [0, 1], [1, 0]])
    assert ds.encoding == "one_hot"


def test_label_by_name_and_numeric_class_order(tmp_path):
    ds = load_csv(_csv(tmp_path, "y,a\n10,0\n2,1\n10,2\n"), label_column="y")
    assert ds.class_names == ("2", "10")
    assert list(ds.labels) == [1, 0, 1]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("a,y\n1,A\n,B\n", "row 3"),
        ("a,y\n1,A\nNA,B\n", "missing value"),
        ("a,y\n1,A\nfoo,B\n2,A\n", "row 3, column 'a'"),
        ("a,y\n1,A\n2,A\n", "single class"),
        ("a,y\n1,A\n2\n", "row 3 has 1 cells"),
    ],
)
def test_rejects_bad_input_with_location(tmp_path, text, fragment):
    with pytest.raises(DataError, match=fragment):
        load_csv(_csv(tmp_path, text))


def test_missing_file():
    with pytest.raises(DataError, match="no such file"):
        load_csv("/nonexistent/file.csv")


def test_unknown_label_column(tmp_path):
    with pytest.raises(DataError, match="not in header"):
        load_csv(_csv(tmp_path, "a,y\n1,A\n2,B\n"), label_column="label")


def test_write_then_load_roundtrip(tmp_path):
    ds = make_ds([[0.0, 1.0], [0.5, 0.25], [1.0, 0.0]], [0, 1, 0])
    ds = Dataset(ds.features, ds.labels, 2, ("u", "v"), ("neg", "pos"))
    write_csv(ds, tmp_path / "rt.csv")
    back = load_csv(tmp_path / "rt.csv")
    np.testing.assert_allclose(back.features, ds.features)
    assert list(back.labels) == list(ds.labels)


def test_dataset_invariants():
    with pytest.raises(DataError):
        make_ds([[1.5]], [0], 2)
    with pytest.raises(DataError):
        make_ds([[0.5], [0.2]], [0, 2], 2)
    ds = make_ds([[0.5], [0.2]], [0, 1])
    Y = ds.one_hot()
    np.testing.assert_array_equal(Y.sum(axis=1), [1, 1])
    with pytest.raises(ValueError):
        ds.features[0, 0] = 0.1


def test_epsilon_examples():
    assert compute_epsilon(make_ds([0, 0.5, 1.0], [0, 1, 0])).eps[0] == pytest.approx(0.5)
    assert compute_epsilon(make_ds([0, 0, 0.4, 1.0], [0, 1, 0, 1])).eps[0] == pytest.approx(0.4)
    e = compute_epsilon(make_ds([[0, 0], [1, 0.25], [0, 0.3], [1, 1]], [0, 1, 0, 1]))
    np.testing.assert_allclose(e.eps, [1, 0.05])
    assert e.eps_max == 1


def test_epsilon_constant_feature_is_one():
    e = compute_epsilon(make_ds([[0.3, 0.0], [0.3, 1.0]], [0, 1]))
    assert e.eps[0] == 1.0


@given(small_datasets())
@settings(max_examples=60, deadline=None)
def test_epsilon_properties(ds):
    e = compute_epsilon(ds)
    assert e.eps_max == e.eps.max()
    assert np.all((e.eps > 0) & (e.eps <= 1))
    for j in range(ds.p):
        v = np.unique(ds.features[:, j])
        assert np.all(np.diff(v) >= e.eps[j] - 1e-15)
    perm = np.random.default_rng(0).permutation(ds.n)
    np.testing.assert_array_equal(compute_epsilon(ds.subset(perm)).eps, e.eps)
    doubled = ds.subset(np.r_[np.arange(ds.n), np.arange(ds.n)])
    np.testing.assert_array_equal(compute_epsilon(doubled).eps, e.eps)


@given(small_datasets())
@settings(max_examples=40, deadline=None)
def test_normalize_is_idempotent_on_normalized_data(ds):
    # columns that already span [0, 1] or are constant zero are fixed points
    X = min_max_normalize(ds.features)
    np.testing.assert_allclose(min_max_normalize(X), X)


def test_split_sizes():
    ds = make_ds(np.linspace(0, 1, 100), np.arange(100) % 2)
    tr, te = split_dataset(ds, SplitSpec(seed=0))
    assert (tr.n, te.n) == (80, 20)
    tr_idx, te_idx = split_indices(20_000)
    assert (tr_idx.size, te_idx.size) == (10_000, 4_000)
    assert np.intersect1d(tr_idx, te_idx).size == 0


@given(st.integers(2, 300), st.integers(0, 10_000), st.integers(1, 400))
@settings(max_examples=60, deadline=None)
def test_split_is_a_deterministic_partition(n, seed, cap):
    spec = SplitSpec(seed=seed, train_cap=cap)
    a = split_indices(n, spec)
    b = split_indices(n, spec)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert np.intersect1d(*a).size == 0
    assert a[1].size == n - int(0.8 * n)
    assert a[0].size == min(int(0.8 * n), cap)


def test_split_too_small():
    with pytest.raises(DataError):
        split_dataset(make_ds([0.0, 1.0], [0, 1]), SplitSpec(train_fraction=0.4))


def test_bundled_dataset_shape():
    ds = load_bundled()
    assert (ds.n, ds.p, ds.K) == (1000, 11, 2)
