"""Assignments for the tree model: verification, warmstarts, extraction, files."""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, compute_epsilon
from ..tree import Branch, Leaf, Node, TreeTopology, depth
from .model import MioError, MioModel, natural_key

CONSTRAINT_TOL = 1e-6
INTEGRALITY_TOL = 1e-4


@dataclass
class Verdict:
    feasible: bool
    objective: float
    violations: list = field(default_factory=list)  # (id, signed slack < 0)

    def __str__(self) -> str:
        if self.feasible:
            return f"feasible, objective={self.objective:.12g}"
        worst = ", ".join(f"{cid} ({slack:.3g})" for cid, slack in self.violations[:10])
        more = "" if len(self.violations) <= 10 else f" and {len(self.violations) - 10} more"
        return f"infeasible: {len(self.violations)} violations: {worst}{more}"


def check_feasible(
    model: MioModel,
    assignment: dict,
    tol: float = CONSTRAINT_TOL,
    int_tol: float = INTEGRALITY_TOL,
) -> Verdict:
    """Evaluate every bound, integrality requirement and constraint.

    Raises :class:`MioError` if ``assignment`` lacks a model variable.
    """
    missing = [v for v in model.variables if v not in assignment]
    if missing:
        missing.sort(key=natural_key)
        raise MioError(f"assignment is missing {len(missing)} variables, e.g. {missing[:5]}")

    violations = []
    for name, var in model.variables.items():
        val = float(assignment[name])
        if val < var.lo - tol:
            violations.append((f"bound:{name}", val - var.lo))
        if val > var.hi + tol:
            violations.append((f"bound:{name}", var.hi - val))
        if var.kind == "binary":
            dist = min(abs(val), abs(val - 1.0))
            if dist > int_tol:
                violations.append((f"binary:{name}", -dist))

    for con in model.constraints:
        lhs = math.fsum(c * float(assignment[v]) for v, c in con.terms)
        if con.sense == "<=":
            slack = con.rhs - lhs
        elif con.sense == ">=":
            slack = lhs - con.rhs
        else:
            slack = -abs(lhs - con.rhs)
        if slack < -tol:
            violations.append((con.id, slack))

    obj = math.fsum(c * float(assignment[v]) for v, c in model.objective.items())
    return Verdict(not violations, obj, violations)


# ---------------------------------------------------------------------------
# tree -> assignment


def _embed(tree: Node, topo: TreeTopology) -> tuple:
    """Place ``tree`` into the complete topology.

    Returns per-branch ``(feature, threshold)`` routing rules, the class of
    every leaf slot (``None`` for padding slots) and the source path of each
    occupied leaf slot. A leaf sitting above the bottom level is pushed down
    the right spine; padding branches split feature 0 at 0, so every sample
    goes right.
    """
    rules = [(0, 0.0)] * topo.n_branch
    classes = [None] * topo.n_leaf
    paths = [None] * topo.n_leaf

    def place(node, bfs, path):
        if bfs >= topo.n_branch:
            t = bfs - topo.n_branch
            classes[t] = node.cls
            paths[t] = path
            return
        if isinstance(node, Leaf):
            rules[bfs] = (0, 0.0)
            place(node, 2 * bfs + 2, path)
            return
        rules[bfs] = (node.feature, float(node.threshold))
        place(node.left, 2 * bfs + 1, path + "L")
        place(node.right, 2 * bfs + 2, path + "R")

    place(tree, 0, "")
    return rules, classes, paths


def _route_complete(X: np.ndarray, rules: list, topo: TreeTopology) -> tuple:
    """Leaf slot of every sample plus, per branch, the samples reaching it."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    reach = [None] * topo.n_branch
    for _ in range(topo.depth):
        nxt = node.copy()
        for m in np.unique(node):
            idx = np.flatnonzero(node == m)
            reach[m] = idx
            j, thr = rules[m]
            go_left = X[idx, j] < thr
            nxt[idx] = np.where(go_left, 2 * m + 1, 2 * m + 2)
        node = nxt
    return node - topo.n_branch, reach


def warmstart_from_tree(model: MioModel, tree: Node, train: Dataset) -> dict:
    """Feasible assignment encoding ``tree`` on ``train``.

    Each model threshold is moved onto the smallest right-going value among
    the samples reaching that branch (or just past the largest left-going one
    when nothing goes right), which satisfies both split constraints without
    changing how any training sample is routed.
    """
    d = model.depth
    if depth(tree) > d:
        raise MioError(f"tree depth {depth(tree)} exceeds model depth {d}")
    if train.n != model.metadata.get("n", train.n):
        raise MioError("training set does not match the model")
    topo = TreeTopology(d)
    L, B = topo.n_leaf, topo.n_branch
    X, y = train.features, train.labels
    n, p, K = train.n, train.p, train.n_classes
    n_min = int(model.metadata["N_min"])
    eps = model.eps if model.eps is not None else compute_epsilon(train)
    accuracy = model.objective_kind == "leaf_accuracy"

    rules, classes, paths = _embed(tree, topo)
    for j, _ in rules:
        if not 0 <= j < p:
            raise MioError(f"tree uses feature {j} but data has {p} features")
    slot, reach = _route_complete(X, rules, topo)
    counts = np.bincount(slot, minlength=L)
    for t in range(L):
        if 0 < counts[t] < n_min:
            raise MioError(f"leaf {paths[t] or 'root'!r} holds {counts[t]} samples, fewer than N_min={n_min}")

    a = {}
    for m in range(B):
        j, thr = rules[m]
        idx = reach[m]
        if idx is None or idx.size == 0:
            b = min(max(thr, 0.0), 1.0)
        else:
            v = X[idx, j]
            right = v[v >= thr]
            left = v[v < thr]
            if right.size:
                b = float(right.min())
            else:
                b = float(left.max() + eps.eps[j])
                if b > 1.0 + 1e-12:
                    raise MioError(f"branch {m}: no threshold in [0, 1] reproduces the split")
                b = min(b, 1.0)
        for jj in range(p):
            a[f"a_{jj}_{m}"] = 1.0 if jj == j else 0.0
        a[f"b_{m}"] = b

    occupied = counts > 0
    for t in range(L):
        cls = classes[t] if occupied[t] else None
        a[f"l_{t}"] = 1.0 if occupied[t] else 0.0
        for k in range(K):
            a[f"c_{k}_{t}"] = 1.0 if cls == k else 0.0
        if accuracy:
            a[f"r_{t}"] = 1.0 / counts[t] if occupied[t] else 0.0
    for i in range(n):
        for t in range(L):
            here = slot[i] == t
            right_cls = here and classes[t] == y[i]
            a[f"z_{i}_{t}"] = 1.0 if here else 0.0
            if accuracy:
                share = 1.0 / counts[t] if here else 0.0
                a[f"s_{i}_{t}"] = share
                a[f"S_{i}_{t}"] = share if right_cls else 0.0
            else:
                a[f"S_{i}_{t}"] = 1.0 if right_cls else 0.0
    if accuracy:
        # same left-to-right summation order as the constraint check
        per_leaf = [math.fsum(a[f"S_{i}_{t}"] for i in range(n)) for t in range(L)]
        a["Q"] = min(v for v, occ in zip(per_leaf, occupied) if occ)
    return a


# ---------------------------------------------------------------------------
# assignment -> tree


def extract_tree(model: MioModel, assignment: dict, check: bool = True) -> Node:
    """Read the complete depth-d tree encoded by a feasible assignment.

    Empty leaves keep placeholder class 0; :func:`minleaf.tree.reduce_tree`
    removes them. When the model still carries its training data, thresholds
    are moved to the midpoint of the data gap they fall in, which routes all
    training samples identically.
    """
    if check:
        verdict = check_feasible(model, assignment)
        if not verdict.feasible:
            raise MioError(f"cannot extract a tree from an infeasible assignment: {verdict}")
    topo = TreeTopology(model.depth)
    p, K = int(model.metadata["p"]), int(model.metadata["K"])
    X = model.data.features if model.data is not None else None

    def build(bfs):
        if bfs >= topo.n_branch:
            t = bfs - topo.n_branch
            if assignment[f"l_{t}"] < 0.5:
                return Leaf(0)
            return Leaf(int(np.argmax([assignment[f"c_{k}_{t}"] for k in range(K)])))
        j = int(np.argmax([assignment[f"a_{jj}_{bfs}"] for jj in range(p)]))
        b = float(assignment[f"b_{bfs}"])
        if X is not None:
            b = _mid_gap(X[:, j], b)
        return Branch(j, b, build(2 * bfs + 1), build(2 * bfs + 2))

    return build(0)


def _mid_gap(values: np.ndarray, b: float) -> float:
    below = values[values < b]
    above = values[values >= b]
    if below.size and above.size:
        return float((below.max() + above.min()) / 2.0)
    return min(max(b, 0.0), 1.0)


# ---------------------------------------------------------------------------
# solution files


def load_solution(path, model: MioModel = None) -> dict:
    """Read ``name value`` lines; ``#`` starts a comment.

    Names unknown to ``model`` (when given) trigger a warning and are kept.
    """
    if not os.path.isfile(path):
        raise MioError(f"no such solution file: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise MioError(f"{path}:{lineno}: expected 'name value', got {line!r}")
            try:
                value = float(parts[1])
            except ValueError:
                raise MioError(f"{path}:{lineno}: bad value {parts[1]!r}") from None
            out[parts[0]] = value
    if model is not None:
        unknown = sorted(set(out) - set(model.variables), key=natural_key)
        if unknown:
            warnings.warn(f"{len(unknown)} unknown variables in {path}, e.g. {unknown[:5]}")
    return out


def write_solution(assignment: dict, path, objective: float = None) -> None:
    with open(path, "w") as fh:
        if objective is not None:
            fh.write(f"# Objective value = {objective!r}\n")
        for name in sorted(assignment, key=natural_key):
            fh.write(f"{name} {float(assignment[name])!r}\n")
