"""Exact search over shallow trees for the min-leaf-accuracy and accuracy objectives.

Both objectives decompose over the two subtrees of a split: the leaf
accuracy of a tree is the minimum of its subtrees' values, the number of
correctly classified samples is their sum. :func:`solve` exploits this with a
depth-first branch and bound on sample subsets; :func:`brute_force_optimal`
enumerates every tree instead and serves as its oracle on small inputs.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset
from .tree import Branch, Leaf, Node, depth as tree_depth, leaf_stats

logger = logging.getLogger(__name__)

OBJECTIVES = ("leaf_accuracy", "misclassification")
STRATEGIES = ("direct", "warmstarted", "gradual")
BRUTE_FORCE_CAP = 10_000_000


@dataclass(frozen=True)
class SearchConfig:
    depth: int = 4
    n_min: int = 50
    objective: str = "leaf_accuracy"
    strategy: str = "warmstarted"
    time_budget: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if not self.time_budget > 0:
            raise ValueError("time_budget must be positive")


@dataclass
class SearchResult:
    tree: Node
    objective_value: float
    proven_optimal: bool
    best_bound: float
    nodes_explored: int = 0
    elapsed: float = 0.0
    improvements: int = 0
    trace: list = field(default_factory=list)  # (seconds, incumbent, bound)


def tree_objective(tree: Node, train: Dataset, objective: str) -> float:
    """Objective value of a fixed tree: leaf accuracy, or correct-sample count.

    Trees with a non-empty leaf below ``n_min`` are not rejected here.
    """
    stats = leaf_stats(tree, train)
    if objective == "leaf_accuracy":
        return stats.leaf_accuracy
    return float(sum(s.correct for s in stats.leaves))


def min_leaf_size(tree: Node, train: Dataset) -> int:
    sizes = [s.count for s in leaf_stats(tree, train).leaves if s.count > 0]
    return min(sizes)


def candidate_splits(train: Dataset) -> list:
    """Per feature, the midpoints between consecutive distinct values."""
    out = []
    for j in range(train.p):
        u = np.unique(train.features[:, j])
        out.append((u[:-1] + u[1:]) / 2.0)
    return out


# ---------------------------------------------------------------------------
# brute force oracle


class CapExceeded(RuntimeError):
    pass


def count_trees(n_candidates: int, depth: int) -> int:
    """Number of trees over ``n_candidates`` splits with depth at most ``depth``."""
    total = 1
    for _ in range(depth):
        total = 1 + n_candidates * total * total
    return total


def brute_force_optimal(train: Dataset, cfg: SearchConfig, cap: int = BRUTE_FORCE_CAP) -> SearchResult:
    """Enumerate every tree over the candidate splits and return the best one.

    Splits are drawn from the whole training set at every node, so splits
    that send all of a node's samples one way (leaving an empty leaf) are
    part of the enumeration. Leaves take the majority class (lowest index on
    ties); trees with a non-empty leaf holding fewer than ``n_min`` samples
    are infeasible.
    """
    start = time.perf_counter()
    X, y, K = train.features, train.labels, train.n_classes
    cands = [(j, float(t)) for j, ts in enumerate(candidate_splits(train)) for t in ts]
    n_trees = count_trees(len(cands), cfg.depth)
    if n_trees > cap:
        raise CapExceeded(f"{n_trees} trees exceed the enumeration cap {cap}")
    if train.n < cfg.n_min:
        raise ValueError(f"n={train.n} < n_min={cfg.n_min}: no feasible tree")

    use_min = cfg.objective == "leaf_accuracy"
    empty_value = np.inf if use_min else 0.0
    combine = np.minimum.outer if use_min else np.add.outer
    feat = np.array([j for j, _ in cands], dtype=np.int64)
    thr = np.array([t for _, t in cands])

    def leaf_value(counts, size):
        if size == 0:
            return empty_value
        if size < cfg.n_min:
            return -np.inf
        best = counts.max()
        return best / size if use_min else float(best)

    def leaf_values(counts, sizes):
        best = counts.max(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = best / sizes if use_min else best.astype(float)
        val = np.where(sizes == 0, empty_value, val)
        return np.where((sizes > 0) & (sizes < cfg.n_min), -np.inf, val)

    def values(idx, depth):
        counts = np.bincount(y[idx], minlength=K)
        own = np.array([leaf_value(counts, idx.size)])
        if depth == 0:
            return own
        if depth == 1:
            Y = np.zeros((idx.size, K))
            Y[np.arange(idx.size), y[idx]] = 1.0
            go_left = X[idx][:, feat] < thr  # (m, C)
            left = go_left.T.astype(float) @ Y
            right = counts - left
            nl = go_left.sum(axis=0)
            vl, vr = leaf_values(left, nl), leaf_values(right, idx.size - nl)
            vals = np.minimum(vl, vr) if use_min else vl + vr
            return np.concatenate([own, vals])
        blocks = [own]
        for c in range(len(cands)):
            go_left = X[idx, feat[c]] < thr[c]
            vl = values(idx[go_left], depth - 1)
            vr = values(idx[~go_left], depth - 1)
            blocks.append(combine(vl, vr).ravel())
        return np.concatenate(blocks)

    def decode(idx, depth, pos):
        counts = np.bincount(y[idx], minlength=K)
        if pos == 0:
            return Leaf(int(np.argmax(counts)) if idx.size else 0)
        pos -= 1
        for c in range(len(cands)):
            go_left = X[idx, feat[c]] < thr[c]
            li, ri = idx[go_left], idx[~go_left]
            nl = count_trees(len(cands), depth - 1)
            size = nl * nl
            if pos < size:
                a, b = divmod(pos, nl)
                return Branch(int(feat[c]), float(thr[c]), decode(li, depth - 1, a), decode(ri, depth - 1, b))
            pos -= size
        raise AssertionError("tree index out of range")

    root = np.arange(train.n)
    vals = values(root, cfg.depth)
    assert vals.size == n_trees
    best = int(np.argmax(vals))
    tree = decode(root, cfg.depth, best)
    value = float(vals[best])
    return SearchResult(tree, value, True, value, n_trees, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# branch and bound


class _Timeout(Exception):
    pass


class _BranchAndBound:
    def __init__(self, train: Dataset, cfg: SearchConfig, deadline: float):
        self.X = train.features
        self.y = train.labels
        self.K = train.n_classes
        self.n, self.p = train.n, train.p
        self.cfg = cfg
        self.n_min = cfg.n_min
        self.minimize = cfg.objective == "leaf_accuracy"
        self.deadline = deadline
        self.nodes = 0
        self.cache = {}
        self.order = np.argsort(self.X, axis=0, kind="stable").T.copy()  # (p, n)
        self.XT = self.X.T.copy()
        self.uniques = [np.unique(self.XT[j]) for j in range(self.p)]
        self.mids = [(u[:-1] + u[1:]) / 2.0 for u in self.uniques]
        _, self.group = np.unique(self.X, axis=0, return_inverse=True)
        self.group = self.group.ravel()
        self.n_groups = int(self.group.max()) + 1

    # objective algebra -------------------------------------------------

    def combine(self, a, b):
        return min(a, b) if self.minimize else a + b

    def leaf(self, idx):
        counts = np.bincount(self.y[idx], minlength=self.K)
        k = int(np.argmax(counts))
        best = counts[k]
        return (best / idx.size if self.minimize else float(best)), k

    def upper_bound(self, idx):
        """Samples with identical features share a leaf, so their minority is always wrong."""
        cnt = np.bincount(self.group[idx] * self.K + self.y[idx], minlength=self.n_groups * self.K)
        correct = cnt.reshape(self.n_groups, self.K).max(axis=1).sum()
        return correct / idx.size if self.minimize else float(correct)

    def threshold(self, j, v_left):
        pos = np.searchsorted(self.uniques[j], v_left)
        return float(self.mids[j][pos])

    # split enumeration ------------------------------------------------

    def split_table(self, idx):
        """Per feature, sorted subset and one-step values of every valid cut.

        Returns ``(S, V, valid, score, lv, rv, left, right)``. ``S`` is the
        (p, m) matrix of subset indices sorted per feature and ``V`` their
        values. The (p, m - 1) arrays describe the cut after sorted position
        ``c``: whether it is valid, its one-step score and the left and right
        leaf values. ``left`` and ``right`` hold the class counts per side.
        """
        m = idx.size
        mask = np.zeros(self.n, dtype=bool)
        mask[idx] = True
        S = self.order[mask[self.order]].reshape(self.p, m)
        V = np.take_along_axis(self.XT, S, axis=1)
        Ys = self.y[S]
        onehot = (Ys[:, :, None] == np.arange(self.K)).astype(np.int64)
        left = np.cumsum(onehot, axis=1)[:, :-1, :]  # (p, m-1, K)
        total = left[0, -1] + onehot[0, -1] if m > 1 else onehot[0, 0]
        right = total - left
        k = np.arange(1, m)
        valid = (V[:, 1:] > V[:, :-1]) & (k >= self.n_min) & (m - k >= self.n_min)
        lbest = left.max(axis=2)
        rbest = right.max(axis=2)
        if self.minimize:
            lv = lbest / k
            rv = rbest / (m - k)
            score = np.minimum(lv, rv)
        else:
            lv = lbest.astype(float)
            rv = rbest.astype(float)
            score = lv + rv
        return S, V, valid, score, lv, rv, left, right

    def best_depth1(self, idx):
        """Exact optimum at depth one: ``(value, tree)``."""
        leaf_val, cls = self.leaf(idx)
        best_val, best_tree = leaf_val, Leaf(cls)
        if idx.size < 2 * self.n_min:
            return best_val, best_tree
        S, V, valid, score, lv, rv, left, right = self.split_table(idx)
        if not valid.any():
            return best_val, best_tree
        flat = np.where(valid, score, -np.inf)
        a = int(np.argmax(flat))  # first max: lowest feature, then lowest cut
        j, c = divmod(a, flat.shape[1])
        if flat[j, c] > best_val:
            thr = self.threshold(j, V[j, c])
            best_tree = Branch(
                j, thr, Leaf(int(np.argmax(left[j, c]))), Leaf(int(np.argmax(right[j, c])))
            )
            best_val = float(flat[j, c])
        return best_val, best_tree

    # recursion ---------------------------------------------------------

    def best(self, idx, depth, alpha):
        """Best subtree of ``idx`` if its value exceeds ``alpha``.

        Returns ``(value, tree)`` on success and ``(bound, None)`` with
        ``bound <= alpha`` when no subtree beats ``alpha``.
        """
        if time.perf_counter() > self.deadline:
            raise _Timeout
        self.nodes += 1
        ub = self.upper_bound(idx)
        if ub <= alpha:
            return ub, None
        if depth == 1 or idx.size < 2 * self.n_min:
            val, tree = self.best_depth1(idx)
            return (val, tree) if val > alpha else (val, None)

        mask = np.zeros(self.n, dtype=bool)
        mask[idx] = True
        key = (np.packbits(mask).tobytes(), depth)
        hit = self.cache.get(key)
        if hit is not None:
            kind, val, tree = hit
            if kind == "exact":
                return (val, tree) if val > alpha else (val, None)
            if val <= alpha:
                return val, None
            ub = min(ub, val)

        leaf_val, cls = self.leaf(idx)
        best_val, best_tree = leaf_val, Leaf(cls)
        floor = max(alpha, best_val)
        if best_val < ub:
            floor, best_val, best_tree = self._splits(idx, depth, floor, ub, best_val, best_tree)

        if best_val > alpha:
            self.cache[key] = ("exact", best_val, best_tree)
            return best_val, best_tree
        self.cache[key] = ("bound", alpha, None)
        return alpha, None

    def _splits(self, idx, depth, floor, ub, best_val, best_tree, on_improve=None):
        S, V, valid, score, lv, rv, _, _ = self.split_table(idx)
        js, cs = np.nonzero(valid)
        if js.size == 0:
            return floor, best_val, best_tree
        # most promising one-step splits first; stable, so ties keep (feature, cut) order
        rank = np.argsort(-score[js, cs], kind="stable")
        for r in rank:
            j, c = int(js[r]), int(cs[r])
            k = c + 1
            li, ri = S[j, :k], S[j, k:]
            first, second = (li, ri), (ri, li)
            first_left = lv[j, c] <= rv[j, c]
            (a_idx, b_idx) = first if first_left else second
            if self.minimize:
                va, ta = self.best(a_idx, depth - 1, floor)
                if ta is None:
                    continue
                vb, tb = self.best(b_idx, depth - 1, floor)
                if tb is None:
                    continue
            else:
                ub_b = self.upper_bound(b_idx)
                va, ta = self.best(a_idx, depth - 1, floor - ub_b)
                if ta is None:
                    continue
                vb, tb = self.best(b_idx, depth - 1, floor - va)
                if tb is None:
                    continue
            val = self.combine(va, vb)
            if val > floor:
                tl, tr = (ta, tb) if first_left else (tb, ta)
                best_val = val
                best_tree = Branch(j, self.threshold(j, V[j, c]), tl, tr)
                floor = val
                if on_improve is not None:
                    on_improve(best_val, best_tree)
                if best_val >= ub:
                    break
        return floor, best_val, best_tree

    def run(self, depth, incumbent_val, incumbent_tree, on_improve):
        idx = np.arange(self.n)
        ub = self.upper_bound(idx)
        leaf_val, cls = self.leaf(idx)
        if leaf_val > incumbent_val:
            incumbent_val, incumbent_tree = leaf_val, Leaf(cls)
            on_improve(incumbent_val, incumbent_tree)
        if incumbent_val >= ub:
            return incumbent_val, incumbent_tree, ub
        if depth == 1:
            if time.perf_counter() > self.deadline:
                raise _Timeout
            val, tree = self.best_depth1(idx)
            if val > incumbent_val:
                on_improve(val, tree)
                return val, tree, val
            return incumbent_val, incumbent_tree, incumbent_val
        _, val, tree = self._splits(idx, depth, incumbent_val, ub, incumbent_val, incumbent_tree, on_improve)
        return val, tree, val


def solve(train: Dataset, cfg: SearchConfig, warmstart: Optional[Node] = None) -> SearchResult:
    """Branch and bound for the optimal tree of depth ``cfg.depth``.

    With ``strategy="warmstarted"`` and no ``warmstart`` given, a CART tree
    grown with the same depth and leaf-size limits is used. ``"gradual"``
    solves depths 1..d in turn, each started from the previous tree, giving
    depth ``k`` a ``2^(k-1) / (2^d - 1)`` share of the time budget. The search
    stops at the budget and returns its incumbent.
    """
    if train.n < cfg.n_min:
        raise ValueError(f"n={train.n} < n_min={cfg.n_min}: no feasible tree")
    if cfg.strategy == "gradual":
        return _solve_gradual(train, cfg, warmstart)
    if cfg.strategy == "warmstarted" and warmstart is None:
        from .cart import cart_train, default_warmstart_config

        warmstart = cart_train(train, default_warmstart_config(cfg.depth, cfg.n_min), cfg.seed)
    return _solve_one(train, cfg, warmstart, time.perf_counter())


def _solve_one(train, cfg, warmstart, start) -> SearchResult:
    deadline = start + cfg.time_budget
    bnb = _BranchAndBound(train, cfg, deadline)
    root_ub = bnb.upper_bound(np.arange(train.n))
    trace = []
    state = {"val": -np.inf, "tree": None, "improvements": 0}

    def on_improve(val, tree):
        if val > state["val"]:
            state["val"], state["tree"] = val, tree
            state["improvements"] += 1
            trace.append((time.perf_counter() - start, float(val), float(root_ub)))

    if warmstart is not None:
        if tree_depth(warmstart) > cfg.depth:
            raise ValueError("warmstart tree is deeper than the search depth")
        if min_leaf_size(warmstart, train) < cfg.n_min:
            raise ValueError("warmstart tree has a leaf below n_min")
        state["val"] = tree_objective(warmstart, train, cfg.objective)
        state["tree"] = warmstart
        trace.append((time.perf_counter() - start, float(state["val"]), float(root_ub)))
    else:
        val, cls = bnb.leaf(np.arange(train.n))
        state["val"], state["tree"] = val, Leaf(cls)
        trace.append((time.perf_counter() - start, float(val), float(root_ub)))

    proven = False
    bound = root_ub
    try:
        val, tree, bound = bnb.run(cfg.depth, state["val"], state["tree"], on_improve)
        proven = True
        if val > state["val"]:
            on_improve(val, tree)
        bound = state["val"]
        trace.append((time.perf_counter() - start, float(state["val"]), float(bound)))
    except _Timeout:
        logger.info("search hit its %.3gs budget after %d nodes", cfg.time_budget, bnb.nodes)

    tree = state["tree"]
    value = tree_objective(tree, train, cfg.objective)
    return SearchResult(
        tree=tree,
        objective_value=value,
        proven_optimal=proven,
        best_bound=max(bound, value),
        nodes_explored=bnb.nodes,
        elapsed=time.perf_counter() - start,
        improvements=state["improvements"],
        trace=trace,
    )


def _solve_gradual(train, cfg, warmstart) -> SearchResult:
    start = time.perf_counter()
    total = 2**cfg.depth - 1
    tree = warmstart if warmstart is not None and tree_depth(warmstart) <= 1 else None
    result = None
    nodes = 0
    for d in range(1, cfg.depth + 1):
        share = cfg.time_budget * 2 ** (d - 1) / total
        sub = replace(cfg, depth=d, strategy="warmstarted", time_budget=share)
        result = _solve_one(train, sub, tree, time.perf_counter())
        nodes += result.nodes_explored
        tree = result.tree
    result.nodes_explored = nodes
    result.elapsed = time.perf_counter() - start
    return result
