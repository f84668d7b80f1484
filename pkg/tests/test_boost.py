import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minleaf.boost import (
    Extender,
    GbdtConfig,
    HybridTree,
    agreement_rate,
    extend_leaf,
    extend_tree,
    gbdt_train,
    predict_hybrid,
    sample_gbdt_config,
    stratified_folds,
)
from minleaf.tree import Branch, Leaf, model_accuracy, predict_many

from conftest import make_ds, random_ds


def two_clusters(rng, n, spread=0.08):
    y = rng.integers(0, 2, n)
    X = np.clip(rng.normal(0.35 + 0.3 * y[:, None], spread, (n, 2)), 0, 1)
    return make_ds(X, y)


def test_single_class_data_predicts_that_class():
    ds = make_ds([0.1, 0.5, 0.9], [1, 1, 1], 2)
    m = gbdt_train(ds, GbdtConfig(n_trees=10))
    assert list(m.predict(np.array([[0.0], [0.3], [1.0]]))) == [1, 1, 1]
    assert np.abs(m.boosters[0].margin(ds.features) - m.boosters[0].base_score).max() < 1e-6


def test_separable_line(line_ds):
    m = gbdt_train(line_ds, GbdtConfig(n_trees=20, max_depth=2, learning_rate=0.3, min_child_weight=0.0))
    assert model_accuracy(m, line_ds) == 1.0


def test_deterministic_under_seed():
    ds = random_ds(np.random.default_rng(0), 80, 3)
    cfg = GbdtConfig(n_trees=15, subsample=0.7, colsample_bytree=0.6, colsample_bylevel=0.6)
    a, b = gbdt_train(ds, cfg, seed=3), gbdt_train(ds, cfg, seed=3)
    np.testing.assert_array_equal(a.predict_proba(ds.features), b.predict_proba(ds.features))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_loss_is_non_increasing(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 4))
    ds = random_ds(rng, int(rng.integers(10, 80)), int(rng.integers(1, 4)), K)
    cfg = dataclasses.replace(
        sample_gbdt_config(rng), n_trees=30, subsample=1.0, gamma=1e-8, learning_rate=float(rng.uniform(1e-3, 0.3))
    )
    loss = gbdt_train(ds, cfg, seed).train_loss
    assert all(b <= a + 1e-12 for a, b in zip(loss, loss[1:]))


def test_two_clusters_accuracy():
    rng = np.random.default_rng(0)
    ds = two_clusters(rng, 500)
    train, test = ds.subset(np.arange(400)), ds.subset(np.arange(400, 500))
    m = gbdt_train(train, GbdtConfig(n_trees=50, max_depth=3))
    assert model_accuracy(m, test) >= 0.95


def test_min_child_weight_blocks_splits():
    ds = random_ds(np.random.default_rng(1), 40, 2)
    m = gbdt_train(ds, GbdtConfig(n_trees=5, min_child_weight=1e6))
    assert m.max_tree_depth() == 0


def test_multiclass_one_vs_rest():
    X = np.r_[np.linspace(0, 0.2, 10), np.linspace(0.4, 0.6, 10), np.linspace(0.8, 1, 10)]
    ds = make_ds(X, [0] * 10 + [1] * 10 + [2] * 10)
    m = gbdt_train(ds, GbdtConfig(n_trees=30, max_depth=2, min_child_weight=0.0))
    assert len(m.boosters) == 3
    assert model_accuracy(m, ds) == 1.0
    np.testing.assert_allclose(m.predict_proba(ds.features).sum(axis=1), 1.0)


def test_sampled_configs_within_ranges():
    rng = np.random.default_rng(0)
    for _ in range(200):
        c = sample_gbdt_config(rng)
        assert 1 <= c.max_depth <= 7 and 10 <= c.n_trees <= 500
        assert 1 <= c.min_child_weight <= 100 and c.min_child_weight == int(c.min_child_weight)
        assert 1e-5 <= c.learning_rate <= 0.7
        assert 0.5 <= c.subsample <= 1 and 0.5 <= c.colsample_bytree <= 1 and 0.5 <= c.colsample_bylevel <= 1
        assert 1e-8 <= c.gamma <= 7 and 1e-8 <= c.alpha <= 100 and 1 <= c.reg_lambda <= 4


def test_config_validation():
    with pytest.raises(ValueError):
        GbdtConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        GbdtConfig(subsample=1.5)


def test_stratified_folds_cover_each_class():
    y = np.array([0] * 7 + [1] * 3)
    folds = stratified_folds(y, 3, np.random.default_rng(0))
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))
    assert all(set(y[f]) == {0, 1} for f in folds)


# --- hybrid trees -------------------------------------------------------------


def test_pure_leaf_gets_majority():
    ds = make_ds([0.1, 0.2, 0.3], [1, 1, 1], 2)
    ext = extend_leaf(1, ds)
    assert ext.kind == "majority" and ext.cls == 1


def test_rare_class_gets_single_tree():
    ds = make_ds(np.linspace(0, 1, 12), [0] * 10 + [1] * 2)
    ext = extend_leaf(0, ds, iterations=2)
    assert ext.kind in ("single_tree", "majority")
    single = gbdt_train(ds, GbdtConfig(n_trees=1, max_depth=5, gamma=0.0, alpha=0.0))
    assert len(single.boosters[0].trees) == 1 and single.max_tree_depth() <= 5
    if ext.kind == "single_tree":
        assert ext.model.max_tree_depth() <= 5
        assert len(ext.model.boosters[0].trees) == 1


def test_mixed_leaf_gets_gbdt_at_least_majority_rate():
    rng = np.random.default_rng(4)
    X = rng.random((60, 2))
    y = (X[:, 0] > 0.4).astype(int)
    ds = make_ds(X, y)
    ext = extend_leaf(int(np.argmax(np.bincount(y))), ds, iterations=6, seed=1)
    acc = np.mean(ext.predict(ds.features) == y)
    assert acc >= np.bincount(y).max() / y.size
    assert ext.kind in ("gbdt", "majority")


def test_all_majority_hybrid_equals_shallow(line_ds):
    tree = Branch(0, 0.5, Leaf(0), Leaf(1))
    h = HybridTree(tree, {"L": Extender("majority", 0), "R": Extender("majority", 1)})
    X = np.linspace(0, 1, 21)[:, None]
    np.testing.assert_array_equal(h.predict(X), predict_many(tree, X))
    assert agreement_rate(h, line_ds) == 1.0
    assert predict_hybrid(h, [0.7]) == 1


def test_flipping_extenders_give_zero_agreement(line_ds):
    tree = Branch(0, 0.5, Leaf(0), Leaf(1))
    h = HybridTree(tree, {"L": Extender("majority", 1), "R": Extender("majority", 0)})
    assert agreement_rate(h, line_ds) == 0.0


def test_agreement_counting():
    X = np.linspace(0, 1, 100)
    ds = make_ds(X, np.zeros(100, int), 2)
    tree = Branch(0, float((X[61] + X[62]) / 2), Leaf(0), Leaf(1))
    h = HybridTree(tree, {"L": Extender("majority", 0), "R": Extender("majority", 0)})
    assert agreement_rate(h, ds) == pytest.approx(0.62)


def test_every_leaf_needs_an_extender():
    with pytest.raises(ValueError):
        HybridTree(Branch(0, 0.5, Leaf(0), Leaf(1)), {"L": Extender("majority", 0)})


def test_extend_tree_rejects_empty_leaf(line_ds):
    with pytest.raises(ValueError, match="no training samples"):
        extend_tree(Branch(0, 0.0, Leaf(0), Leaf(1)), line_ds)


def test_hybrid_never_worse_on_training_data():
    rng = np.random.default_rng(7)
    X = rng.random((150, 3))
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(int)
    y[rng.random(150) < 0.1] ^= 1
    ds = make_ds(X, y)
    tree = Branch(2, 0.5, Leaf(0), Leaf(1))
    h = extend_tree(tree, ds, iterations=3, seed=0)
    assert model_accuracy(h, ds) >= model_accuracy(tree, ds)
    for path, ext in h.extenders.items():
        assert ext.kind in ("majority", "single_tree", "gbdt")


def test_hybrid_json_roundtrip():
    rng = np.random.default_rng(8)
    X = rng.random((80, 2))
    ds = make_ds(X, (X[:, 1] > 0.5).astype(int))
    h = extend_tree(Branch(0, 0.5, Leaf(0), Leaf(1)), ds, iterations=2)
    back = HybridTree.loads(h.dumps())
    np.testing.assert_array_equal(back.predict(X), h.predict(X))
    assert json.loads(h.dumps())["shallow"]["branch"]["feature"] == 0
