import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minleaf.cart import CartConfig, cart_train
from minleaf.search import (
    CapExceeded,
    SearchConfig,
    brute_force_optimal,
    candidate_splits,
    count_trees,
    solve,
    tree_objective,
)
from minleaf.tree import Branch, Leaf, depth, leaf_accuracy, leaf_stats

from conftest import make_ds, small_datasets


def test_candidate_splits():
    ds = make_ds([[0, 0.3, 0], [0.5, 0.3, 0], [1, 0.3, 1]], [0, 1, 0])
    c = candidate_splits(ds)
    np.testing.assert_allclose(c[0], [0.25, 0.75])
    assert c[1].size == 0
    np.testing.assert_allclose(c[2], [0.5])


def test_count_trees():
    assert count_trees(3, 0) == 1
    assert count_trees(3, 1) == 4
    assert count_trees(2, 2) == 1 + 2 * 3 * 3


@pytest.mark.parametrize(
    "X, y, d, n_min, expected",
    [
        ([0, 0.3, 0.6, 1], [0, 0, 1, 1], 1, 1, 1.0),
        ([0.1, 0.4, 0.6, 0.9], [0, 0, 0, 1], 1, 2, 0.75),
        ([[0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1]], [0, 0, 1, 1], 2, 1, 1.0),
    ],
)
def test_spec_examples(X, y, d, n_min, expected):
    ds = make_ds(X, y)
    cfg = SearchConfig(depth=d, n_min=n_min, strategy="direct", time_budget=30)
    bf = brute_force_optimal(ds, cfg)
    res = solve(ds, cfg)
    assert bf.objective_value == pytest.approx(expected)
    assert res.objective_value == pytest.approx(expected)
    assert res.proven_optimal


def test_brute_force_split_on_line():
    ds = make_ds([0, 0.3, 0.6, 1], [0, 0, 1, 1])
    tree = brute_force_optimal(ds, SearchConfig(depth=1, n_min=1)).tree
    assert tree == Branch(0, pytest.approx(0.45), Leaf(0), Leaf(1))


def test_brute_force_cap():
    ds = make_ds(np.linspace(0, 1, 30), np.arange(30) % 2)
    with pytest.raises(CapExceeded):
        brute_force_optimal(ds, SearchConfig(depth=3, n_min=1), cap=1000)


def test_infeasible_n_min():
    ds = make_ds([0.1, 0.9], [0, 1])
    with pytest.raises(ValueError):
        solve(ds, SearchConfig(depth=1, n_min=3))


def test_config_validation():
    for bad in (dict(depth=0), dict(n_min=0), dict(time_budget=0), dict(strategy="x"), dict(objective="y")):
        with pytest.raises(ValueError):
            SearchConfig(**bad)


@given(
    small_datasets(max_n=24, max_p=2, levels=5),
    st.integers(1, 2),
    st.sampled_from([1, 3]),
    st.sampled_from(["leaf_accuracy", "misclassification"]),
    st.sampled_from(["direct", "warmstarted", "gradual"]),
)
@settings(max_examples=60, deadline=None)
def test_matches_brute_force(ds, d, n_min, objective, strategy):
    cfg = SearchConfig(depth=d, n_min=min(n_min, ds.n), objective=objective, strategy=strategy, time_budget=30)
    bf = brute_force_optimal(ds, cfg)
    res = solve(ds, cfg)
    assert abs(res.objective_value - bf.objective_value) <= 1e-9
    assert res.proven_optimal
    assert depth(res.tree) <= d
    assert tree_objective(res.tree, ds, objective) == pytest.approx(res.objective_value, abs=1e-12)
    sizes = [s.count for s in leaf_stats(res.tree, ds).leaves if s.count]
    assert min(sizes) >= cfg.n_min


def test_warmstart_with_optimum_has_no_improvement(xor_ds):
    cfg = SearchConfig(depth=2, n_min=1, strategy="warmstarted")
    best = brute_force_optimal(xor_ds, cfg).tree
    res = solve(xor_ds, cfg, warmstart=best)
    assert res.proven_optimal and res.improvements == 0
    assert res.objective_value == 1.0 and res.tree == best


def test_tiny_budget_returns_warmstart():
    rng = np.random.default_rng(0)
    ds = make_ds(rng.random((400, 6)), rng.integers(0, 2, 400))
    warm = cart_train(ds, CartConfig(max_depth=3, min_samples_leaf=10))
    res = solve(ds, SearchConfig(depth=3, n_min=10, time_budget=1e-6), warmstart=warm)
    assert res.objective_value >= leaf_accuracy(warm, ds)[0]
    assert res.objective_value <= res.best_bound


def test_warmstart_too_deep_or_small_rejected(line_ds):
    deep = Branch(0, 0.5, Branch(0, 0.15, Leaf(0), Leaf(0)), Leaf(1))
    with pytest.raises(ValueError):
        solve(line_ds, SearchConfig(depth=1, n_min=1), warmstart=deep)
    with pytest.raises(ValueError):
        solve(line_ds, SearchConfig(depth=1, n_min=2), warmstart=Branch(0, 0.15, Leaf(0), Leaf(1)))


@given(small_datasets(max_n=40, max_p=3), st.integers(1, 2))
@settings(max_examples=30, deadline=None)
def test_trace_is_monotone_and_never_below_warmstart(ds, d):
    warm = cart_train(ds, CartConfig(max_depth=d, min_samples_leaf=2))
    n_min = 2 if ds.n >= 2 else 1
    res = solve(ds, SearchConfig(depth=d, n_min=n_min, time_budget=30), warmstart=warm)
    inc = [v for _, v, _ in res.trace]
    bounds = [b for _, _, b in res.trace]
    assert all(b >= a for a, b in zip(inc, inc[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(bounds, bounds[1:]))
    assert res.objective_value >= leaf_accuracy(warm, ds)[0] - 1e-12
    assert res.objective_value <= res.best_bound + 1e-12


def test_gradual_respects_budget():
    rng = np.random.default_rng(5)
    ds = make_ds(rng.random((300, 5)), rng.integers(0, 2, 300))
    start = time.perf_counter()
    res = solve(ds, SearchConfig(depth=3, n_min=5, strategy="gradual", time_budget=1.5))
    assert time.perf_counter() - start < 5
    assert depth(res.tree) <= 3
