"""Axis-aligned shallow trees: routing, leaf statistics, reduction and export.

Routing convention: a sample goes LEFT iff ``x[feature] < threshold`` and
RIGHT otherwise, so a value equal to the threshold goes right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class Leaf:
    cls: int


@dataclass(frozen=True)
class Branch:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Branch]
ShallowTree = Node


# ---------------------------------------------------------------------------
# complete-tree topology used by the MIO encoding


@dataclass(frozen=True)
class TreeTopology:
    """Complete binary tree of depth ``d``.

    Branch nodes are numbered breadth-first from 0 (children of ``m`` are
    ``2m + 1`` and ``2m + 2``); leaves are numbered 0..2^d - 1 left to right.
    """

    depth: int

    @property
    def n_branch(self) -> int:
        return 2**self.depth - 1

    @property
    def n_leaf(self) -> int:
        return 2**self.depth

    def leaf_node(self, t: int) -> int:
        """Breadth-first node id of leaf ``t``."""
        return self.n_branch + t

    def ancestors(self, t: int) -> tuple:
        """``(A_L, A_R)``: branch ancestors of leaf ``t`` it lies left / right of."""
        left, right = [], []
        node = self.leaf_node(t)
        while node > 0:
            parent = (node - 1) // 2
            (left if node == 2 * parent + 1 else right).append(parent)
            node = parent
        return tuple(reversed(left)), tuple(reversed(right))


# ---------------------------------------------------------------------------
# structure helpers


def depth(tree: Node) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(depth(tree.left), depth(tree.right))


def iter_leaves(tree: Node, path: str = "") -> Iterator[tuple]:
    """Yield ``(path, leaf)`` pairs left to right; ``path`` is a string of L/R."""
    if isinstance(tree, Leaf):
        yield path, tree
    else:
        yield from iter_leaves(tree.left, path + "L")
        yield from iter_leaves(tree.right, path + "R")


def n_leaves(tree: Node) -> int:
    return sum(1 for _ in iter_leaves(tree))


def route(tree: Node, x) -> str:
    """Path (string of ``L``/``R``) of the leaf that ``x`` falls into."""
    path = []
    node = tree
    while isinstance(node, Branch):
        if x[node.feature] < node.threshold:
            path.append("L")
            node = node.left
        else:
            path.append("R")
            node = node.right
    return "".join(path)


def predict(tree: Node, x) -> int:
    node = tree
    while isinstance(node, Branch):
        node = node.left if x[node.feature] < node.threshold else node.right
    return node.cls


def assign_leaves(tree: Node, X: np.ndarray) -> np.ndarray:
    """Left-to-right leaf position of every row of ``X``."""
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0], dtype=np.int64)

    def walk(node, idx, offset):
        if isinstance(node, Leaf):
            out[idx] = offset
            return offset + 1
        go_left = X[idx, node.feature] < node.threshold
        offset = walk(node.left, idx[go_left], offset)
        return walk(node.right, idx[~go_left], offset)

    walk(tree, np.arange(X.shape[0]), 0)
    return out


def predict_many(model, X: np.ndarray) -> np.ndarray:
    """Predictions for every row; ``model`` is a tree or has ``predict(X)``."""
    if isinstance(model, (Leaf, Branch)):
        classes = np.array([leaf.cls for _, leaf in iter_leaves(model)], dtype=np.int64)
        return classes[assign_leaves(model, X)]
    return np.asarray(model.predict(X), dtype=np.int64)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class LeafStat:
    path: str
    cls: int
    count: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else float("nan")


@dataclass(frozen=True)
class LeafStats:
    leaves: tuple
    leaf_accuracy: float
    model_accuracy: float

    def by_path(self) -> dict:
        return {s.path: s for s in self.leaves}


def leaf_stats(tree: Node, ds: Dataset) -> LeafStats:
    pos = assign_leaves(tree, ds.features)
    leaves = []
    for i, (path, leaf) in enumerate(iter_leaves(tree)):
        mask = pos == i
        leaves.append(LeafStat(path, leaf.cls, int(mask.sum()), int((ds.labels[mask] == leaf.cls).sum())))
    accs = [s.accuracy for s in leaves if s.count > 0]
    la = min(accs) if accs else float("nan")
    total = sum(s.count for s in leaves)
    ma = sum(s.correct for s in leaves) / total if total else float("nan")
    return LeafStats(tuple(leaves), la, ma)


def leaf_accuracy(tree: Node, ds: Dataset) -> tuple:
    """Minimum accuracy over the leaves that receive at least one sample.

    Returns ``(value, stats)``.
    """
    stats = leaf_stats(tree, ds)
    return stats.leaf_accuracy, stats


def model_accuracy(model, ds: Dataset) -> float:
    if ds.n == 0:
        return float("nan")
    return float(np.mean(predict_many(model, ds.features) == ds.labels))


# ---------------------------------------------------------------------------
# reduction


def reduce_tree(tree: Node, train: Dataset) -> Node:
    """Prune leaves without training samples and merge same-class sibling leaves.

    Runs bottom-up, so a merge can expose a new same-class sibling pair above
    it; one pass reaches the fixpoint.
    """
    X = train.features

    def walk(node, idx):
        if isinstance(node, Leaf):
            return node
        go_left = X[idx, node.feature] < node.threshold
        left_idx, right_idx = idx[go_left], idx[~go_left]
        if left_idx.size == 0 and idx.size > 0:
            return walk(node.right, right_idx)
        if right_idx.size == 0 and idx.size > 0:
            return walk(node.left, left_idx)
        left = walk(node.left, left_idx)
        right = walk(node.right, right_idx)
        if isinstance(left, Leaf) and isinstance(right, Leaf) and left.cls == right.cls:
            return Leaf(left.cls)
        return Branch(node.feature, node.threshold, left, right)

    return walk(tree, np.arange(train.n))


# ---------------------------------------------------------------------------
# serialization


def to_dict(tree: Node) -> dict:
    if isinstance(tree, Leaf):
        return {"leaf": {"class": int(tree.cls)}}
    return {
        "branch": {
            "feature": int(tree.feature),
            "threshold": float(tree.threshold),
            "left": to_dict(tree.left),
            "right": to_dict(tree.right),
        }
    }


def from_dict(obj: dict) -> Node:
    if "leaf" in obj:
        return Leaf(int(obj["leaf"]["class"]))
    if "branch" in obj:
        b = obj["branch"]
        return Branch(int(b["feature"]), float(b["threshold"]), from_dict(b["left"]), from_dict(b["right"]))
    raise ValueError(f"not a tree node: {sorted(obj)}")


def dumps(tree: Node) -> str:
    return json.dumps(to_dict(tree), indent=2)


def loads(text: str) -> Node:
    return from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Graphviz


def _pct(v: float) -> str:
    return "n/a" if v != v else f"{100 * v:.1f}%"


def export_dot(
    tree: Node,
    train_stats: LeafStats,
    test_stats: Optional[LeafStats] = None,
    feature_names=None,
    class_names=None,
) -> str:
    """Graphviz DOT text; leaves show the test accuracy in bold above the train accuracy."""
    train_by = train_stats.by_path()
    test_by = test_stats.by_path() if test_stats is not None else {}
    fname = (lambda j: feature_names[j]) if feature_names else (lambda j: f"x{j}")
    cname = (lambda k: class_names[k]) if class_names else str

    lines = ["digraph Tree {", '  node [shape=box, fontname="helvetica"];', '  edge [fontname="helvetica"];']
    counter = [0]

    def emit(node, path):
        nid = counter[0]
        counter[0] += 1
        if isinstance(node, Leaf):
            parts = [_escape(cname(node.cls))]
            if path in test_by:
                parts.append(f"<b>{_pct(test_by[path].accuracy)}</b>")
            if path in train_by:
                parts.append(_pct(train_by[path].accuracy))
            lines.append(f'  n{nid} [label=<{"<br/>".join(parts)}>, style="rounded"];')
            return nid
        lines.append(f'  n{nid} [label=<{_escape(fname(node.feature))} &lt; {node.threshold:.4f}>];')
        left = emit(node.left, path + "L")
        right = emit(node.right, path + "R")
        lines.append(f'  n{nid} -> n{left} [label=<&lt; {node.threshold:.4f}>];')
        lines.append(f'  n{nid} -> n{right} [label=<&ge; {node.threshold:.4f}>];')
        return nid

    emit(tree, "")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _escape(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
