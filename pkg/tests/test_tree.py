import itertools
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minleaf.tree import (
    Branch,
    Leaf,
    TreeTopology,
    depth,
    dumps,
    export_dot,
    leaf_accuracy,
    leaf_stats,
    loads,
    model_accuracy,
    n_leaves,
    predict,
    predict_many,
    reduce_tree,
    route,
)

from conftest import make_ds, small_datasets

GOLDEN = Path(__file__).parent / "golden"

STUMP = Branch(0, 0.5, Leaf(0), Leaf(1))


def test_route_examples():
    assert route(STUMP, [0.4]) == "L" and predict(STUMP, [0.4]) == 0
    assert route(STUMP, [0.5]) == "R" and predict(STUMP, [0.5]) == 1


def test_depth2_routing_matches_both_comparisons():
    tree = Branch(0, 0.5, Branch(1, 0.3, Leaf(0), Leaf(1)), Branch(1, 0.7, Leaf(1), Leaf(0)))
    for x0, x1 in itertools.product([0.0, 0.3, 0.5, 0.7, 1.0], repeat=2):
        first = "L" if x0 < 0.5 else "R"
        second = "L" if x1 < (0.3 if first == "L" else 0.7) else "R"
        assert route(tree, [x0, x1]) == first + second


def test_topology_ancestors():
    topo = TreeTopology(1)
    assert topo.ancestors(0) == ((0,), ())
    assert topo.ancestors(1) == ((), (0,))
    for d in range(1, 5):
        topo = TreeTopology(d)
        assert (topo.n_branch, topo.n_leaf) == (2**d - 1, 2**d)
        for t in range(topo.n_leaf):
            left, right = topo.ancestors(t)
            assert len(left) + len(right) == d
            assert not set(left) & set(right)


def test_leaf_accuracy_examples():
    ds = make_ds([0.1, 0.2, 0.3, 0.4], [0, 0, 0, 1])
    assert leaf_accuracy(Leaf(0), ds)[0] == 0.75
    # two leaves with accuracies 0.9 and 0.6
    X = np.r_[np.full(10, 0.2), np.full(10, 0.8)]
    y = np.r_[[0] * 9 + [1], [1] * 6 + [0] * 4]
    value, stats = leaf_accuracy(STUMP, make_ds(X, y))
    assert value == pytest.approx(0.6)
    assert [s.accuracy for s in stats.leaves] == [pytest.approx(0.9), pytest.approx(0.6)]


def test_empty_leaf_is_ignored():
    ds = make_ds([0.6, 0.7, 0.9], [1, 1, 0])
    value, stats = leaf_accuracy(STUMP, ds)
    assert stats.leaves[0].count == 0
    assert value == pytest.approx(2 / 3)


def test_model_accuracy_examples(line_ds):
    assert model_accuracy(STUMP, line_ds) == 1.0
    assert model_accuracy(Leaf(0), make_ds([0, 0.3, 0.6, 1], [0, 0, 1, 1])) == 0.5


@given(small_datasets())
@settings(max_examples=40, deadline=None)
def test_one_leaf_tree_leaf_and_model_accuracy_agree(ds):
    for k in range(ds.K):
        assert leaf_accuracy(Leaf(k), ds)[0] == pytest.approx(model_accuracy(Leaf(k), ds))


def test_reduce_examples():
    ds = make_ds([[0.1, 0.1], [0.1, 0.9], [0.9, 0.1], [0.9, 0.9]], [0, 0, 0, 1])
    all_a = Branch(0, 0.5, Branch(1, 0.5, Leaf(0), Leaf(0)), Branch(1, 0.5, Leaf(0), Leaf(0)))
    assert reduce_tree(all_a, ds) == Leaf(0)
    nothing_left = Branch(0, 0.0, Leaf(0), Leaf(1))
    assert reduce_tree(nothing_left, ds) == Leaf(1)
    assert reduce_tree(STUMP, ds) == STUMP


def random_tree(rng, p, d, K=2):
    if d == 0 or rng.random() < 0.2:
        return Leaf(int(rng.integers(K)))
    return Branch(
        int(rng.integers(p)),
        float(rng.choice([0.0, rng.random(), 1.0], p=[0.1, 0.8, 0.1])),
        random_tree(rng, p, d - 1, K),
        random_tree(rng, p, d - 1, K),
    )


@given(small_datasets(), st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_reduce_invariants(ds, seed):
    tree = random_tree(np.random.default_rng(seed), ds.p, 3)
    red = reduce_tree(tree, ds)
    np.testing.assert_array_equal(predict_many(red, ds.features), predict_many(tree, ds.features))
    assert model_accuracy(red, ds) == model_accuracy(tree, ds)
    assert leaf_accuracy(red, ds)[0] >= leaf_accuracy(tree, ds)[0]
    assert reduce_tree(red, ds) == red
    assert all(s.count > 0 for s in leaf_stats(red, ds).leaves)
    assert depth(red) <= depth(tree)


def test_json_roundtrip():
    tree = Branch(1, 0.25, Leaf(0), Branch(0, 0.75, Leaf(1), Leaf(0)))
    assert loads(dumps(tree)) == tree
    assert '"threshold": 0.25' in dumps(tree)
    with pytest.raises(ValueError):
        loads('{"node": {}}')


def test_dot_single_leaf():
    ds = make_ds([0.1, 0.9], [0, 1])
    text = export_dot(Leaf(0), leaf_stats(Leaf(0), ds))
    assert len(re.findall(r"^\s*n\d+ \[", text, flags=re.M)) == 1 and "->" not in text


def test_dot_stump_has_three_nodes_two_edges(line_ds):
    text = export_dot(STUMP, leaf_stats(STUMP, line_ds))
    assert text.count("->") == 2
    assert len(re.findall(r"^\s*n\d+ \[", text, flags=re.M)) == 3
    assert "x0 &lt; 0.5000" in text


def golden_dot_text():
    train = make_ds([[0.1, 0.2], [0.3, 0.9], [0.7, 0.4], [0.9, 0.8], [0.6, 0.1]], [0, 1, 1, 1, 0])
    test = make_ds([[0.2, 0.2], [0.8, 0.9], [0.65, 0.3]], [0, 1, 1])
    tree = Branch(0, 0.45, Branch(1, 0.55, Leaf(0), Leaf(1)), Leaf(1))
    return export_dot(tree, leaf_stats(tree, train), leaf_stats(tree, test), ["age", "priors"], ["no", "yes"])


def test_dot_golden_file():
    assert golden_dot_text() == (GOLDEN / "tree.dot").read_text()
