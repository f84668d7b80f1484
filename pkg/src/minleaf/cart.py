"""Greedy Gini CART with weakest-link pruning and a budgeted random search."""

from __future__ import annotations

import heapq
import logging
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .data import Dataset
from .tree import Branch, Leaf, Node, model_accuracy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CartConfig:
    max_depth: int = 4
    min_samples_leaf: int = 50
    min_samples_split: int = 2
    max_leaf_nodes: Optional[int] = None
    min_impurity_decrease: float = 0.0
    ccp_alpha: float = 0.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 2:
            raise ValueError("max_leaf_nodes must be >= 2")
        if self.min_impurity_decrease < 0 or self.ccp_alpha < 0:
            raise ValueError("min_impurity_decrease and ccp_alpha must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


class _Grow:
    """Mutable node used while growing and pruning."""

    __slots__ = ("idx", "depth", "counts", "split", "left", "right")

    def __init__(self, idx, depth, counts):
        self.idx = idx
        self.depth = depth
        self.counts = counts
        self.split = None
        self.left = None
        self.right = None

    @property
    def is_leaf(self):
        return self.left is None


def gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    q = counts / total
    return float(1.0 - np.dot(q, q))


def best_split(X, y, idx, n_classes, min_samples_leaf):
    """Lowest weighted child Gini over midpoint thresholds.

    Returns ``(child_impurity, feature, threshold)`` or ``None``. Ties keep the
    lowest feature index, then the lowest threshold.
    """
    m = idx.size
    best = None
    if m < 2 * min_samples_leaf:
        return None
    onehot = np.zeros((m, n_classes))
    total = np.bincount(y[idx], minlength=n_classes)
    for j in range(X.shape[1]):
        order = np.argsort(X[idx, j], kind="stable")
        v = X[idx[order], j]
        onehot[:] = 0.0
        onehot[np.arange(m), y[idx[order]]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        k = np.arange(1, m)
        ok = (v[1:] > v[:-1]) & (k >= min_samples_leaf) & (m - k >= min_samples_leaf)
        if not ok.any():
            continue
        left = left[ok]
        kl = k[ok].astype(float)
        right = total - left
        kr = m - kl
        gl = 1.0 - np.sum(left**2, axis=1) / kl**2
        gr = 1.0 - np.sum(right**2, axis=1) / kr**2
        imp = (kl * gl + kr * gr) / m
        a = int(np.argmin(imp))
        cut = np.flatnonzero(ok)[a]
        cand = (float(imp[a]), j, float((v[cut] + v[cut + 1]) / 2.0))
        # strict improvement only, so earlier features win ties
        if best is None or cand[0] < best[0] - 1e-15:
            best = cand
    return best


def cart_train(train: Dataset, cfg: CartConfig = CartConfig(), seed: int = 0) -> Node:
    """Grow a Gini tree under ``cfg`` and prune it with ``cfg.ccp_alpha``.

    Growth is best-first by weighted impurity decrease, which only matters
    when ``max_leaf_nodes`` caps the number of leaves. ``seed`` is accepted
    for interface symmetry; the trainer is deterministic.
    """
    X, y, K, N = train.features, train.labels, train.n_classes, train.n
    root = _Grow(np.arange(N), 0, np.bincount(y, minlength=K))
    n_leaf = 1
    heap = []
    tick = 0

    def consider(node):
        nonlocal tick
        if node.depth >= cfg.max_depth or node.idx.size < cfg.min_samples_split:
            return
        if gini(node.counts) == 0.0:
            return
        found = best_split(X, y, node.idx, K, cfg.min_samples_leaf)
        if found is None:
            return
        child_imp, j, thr = found
        decrease = node.idx.size / N * (gini(node.counts) - child_imp)
        if decrease < cfg.min_impurity_decrease:
            return
        node.split = (j, thr)
        heapq.heappush(heap, (-decrease, tick, node))
        tick += 1

    consider(root)
    while heap:
        if cfg.max_leaf_nodes is not None and n_leaf >= cfg.max_leaf_nodes:
            break
        _, _, node = heapq.heappop(heap)
        j, thr = node.split
        go_left = X[node.idx, j] < thr
        for side, mask in (("left", go_left), ("right", ~go_left)):
            sub = node.idx[mask]
            child = _Grow(sub, node.depth + 1, np.bincount(y[sub], minlength=K))
            setattr(node, side, child)
        n_leaf += 1
        consider(node.left)
        consider(node.right)

    if cfg.ccp_alpha > 0:
        _prune(root, cfg.ccp_alpha, N)
    return _freeze(root)


def _leaf_risk(node, N):
    return (node.counts.sum() - node.counts.max()) / N


def _subtree(node, N):
    """(risk of the subtree's leaves, number of leaves)."""
    if node.is_leaf:
        return _leaf_risk(node, N), 1
    rl, nl = _subtree(node.left, N)
    rr, nr = _subtree(node.right, N)
    return rl + rr, nl + nr


def _prune(root, alpha, N):
    """Weakest-link pruning with misclassification risk."""
    while not root.is_leaf:
        weakest, g_min = None, np.inf
        stack = [root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            risk, leaves = _subtree(node, N)
            g = (_leaf_risk(node, N) - risk) / (leaves - 1)
            if g < g_min - 1e-15:
                weakest, g_min = node, g
            stack.extend((node.right, node.left))
        if g_min > alpha:
            break
        weakest.left = weakest.right = None


def _freeze(node) -> Node:
    if node.is_leaf:
        return Leaf(int(np.argmax(node.counts)))
    j, thr = node.split
    return Branch(j, thr, _freeze(node.left), _freeze(node.right))


# ---------------------------------------------------------------------------
# hyperparameter search


def sample_cart_config(rng: np.random.Generator, max_depth: int = 4, min_samples_leaf: int = 50) -> CartConfig:
    """Draw one configuration; depth and leaf size stay fixed."""
    return CartConfig(
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        min_samples_split=int(rng.integers(2, 101)),
        max_leaf_nodes=int(rng.integers(2, 17)),
        min_impurity_decrease=float(rng.uniform(0.0, 0.2)),
        ccp_alpha=float(rng.uniform(0.0, 0.3)),
    )


def kfold_indices(n: int, folds: int, rng: np.random.Generator) -> list:
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cart_search(
    train: Dataset,
    iterations: int = 100,
    folds: int = 5,
    seed: int = 0,
    max_depth: int = 4,
    min_samples_leaf: int = 50,
) -> tuple:
    """Random search over CART configurations scored by k-fold CV accuracy.

    Returns ``(tree, config)`` refit on all of ``train``. When some class has
    fewer than ``folds`` samples the CV is replaced by one 80/20 holdout.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    configs = [sample_cart_config(rng, max_depth, min_samples_leaf) for _ in range(iterations)]
    counts = np.bincount(train.labels, minlength=train.n_classes)
    present = counts[counts > 0]
    split_rng = np.random.default_rng([seed, 1])
    if present.min() >= folds and train.n >= folds:
        parts = kfold_indices(train.n, folds, split_rng)
        schemes = [(np.setdiff1d(np.arange(train.n), val), val) for val in parts]
    else:
        logger.warning("cart_search: too few samples for %d-fold CV, using a single holdout split", folds)
        perm = split_rng.permutation(train.n)
        cut = max(1, int(0.8 * train.n))
        val = np.sort(perm[cut:]) if cut < train.n else np.sort(perm[-1:])
        schemes = [(np.sort(perm[:cut]), val)]

    best_cfg, best_score = None, -np.inf
    for cfg in configs:
        scores = []
        for tr, val in schemes:
            t = cart_train(train.subset(tr), cfg, seed)
            scores.append(model_accuracy(t, train.subset(val)))
        score = float(np.mean(scores))
        if score > best_score:
            best_cfg, best_score = cfg, score
    return cart_train(train, best_cfg, seed), best_cfg


def default_warmstart_config(depth: int, n_min: int) -> CartConfig:
    """Unpruned Gini tree bounded only by depth and leaf size."""
    return replace(CartConfig(), max_depth=depth, min_samples_leaf=n_min)
