"""Second-order gradient boosting with logistic loss, and hybrid trees.

A hybrid tree keeps the shallow tree for routing and lets every leaf hand
its samples to an extender: the leaf's majority class, a single boosted
tree of depth 5, or a tuned boosted ensemble.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .tree import Node, assign_leaves, from_dict, iter_leaves, predict_many, to_dict


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 100
    max_depth: int = 3
    min_child_weight: float = 1.0
    learning_rate: float = 0.3
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    colsample_bylevel: float = 1.0
    gamma: float = 1e-8
    alpha: float = 1e-8
    reg_lambda: float = 1.0

    def __post_init__(self):
        checks = [
            (self.n_trees >= 1, "n_trees >= 1"),
            (self.max_depth >= 1, "max_depth >= 1"),
            (self.min_child_weight >= 0, "min_child_weight >= 0"),
            (0 < self.learning_rate <= 1, "0 < learning_rate <= 1"),
            (0 < self.subsample <= 1, "0 < subsample <= 1"),
            (0 < self.colsample_bytree <= 1, "0 < colsample_bytree <= 1"),
            (0 < self.colsample_bylevel <= 1, "0 < colsample_bylevel <= 1"),
            (self.gamma >= 0 and self.alpha >= 0 and self.reg_lambda >= 0, "non-negative regularization"),
        ]
        for ok, what in checks:
            if not ok:
                raise ValueError(f"GbdtConfig requires {what}")


def _log_uniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_gbdt_config(rng: np.random.Generator) -> GbdtConfig:
    """One draw from the leaf-extender search space."""
    return GbdtConfig(
        max_depth=int(rng.integers(1, 8)),
        n_trees=int(rng.integers(10, 501)),
        min_child_weight=float(round(_log_uniform(rng, 1.0, 100.0))),
        learning_rate=float(rng.uniform(1e-5, 0.7)),
        subsample=float(rng.uniform(0.5, 1.0)),
        colsample_bylevel=float(rng.uniform(0.5, 1.0)),
        colsample_bytree=float(rng.uniform(0.5, 1.0)),
        gamma=_log_uniform(rng, 1e-8, 7.0),
        alpha=_log_uniform(rng, 1e-8, 100.0),
        reg_lambda=_log_uniform(rng, 1.0, 4.0),
    )


# ---------------------------------------------------------------------------
# regression trees on gradient statistics


@dataclass
class RegTree:
    """Flat binary tree; ``feature[v] < 0`` marks leaf ``v`` with weight ``value[v]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] < self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def depth(self) -> int:
        def walk(v):
            if self.feature[v] < 0:
                return 0
            return 1 + max(walk(self.left[v]), walk(self.right[v]))

        return walk(0)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, obj: dict) -> "RegTree":
        return cls(
            np.asarray(obj["feature"], dtype=np.int64),
            np.asarray(obj["threshold"], dtype=float),
            np.asarray(obj["left"], dtype=np.int64),
            np.asarray(obj["right"], dtype=np.int64),
            np.asarray(obj["value"], dtype=float),
        )


def _soft(G, alpha):
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _score(G, H, cfg):
    T = _soft(G, cfg.alpha)
    return T * T / (H + cfg.reg_lambda)


def _fit_tree(X, order, rows_mask, g, h, features, cfg: GbdtConfig, rng) -> RegTree:
    """Exact greedy growth, level by level, all nodes of a level at once.

    ``order[j]`` lists all rows sorted by feature ``j``; only rows in
    ``rows_mask`` take part.
    """
    n = X.shape[0]
    node_of = np.full(n, -1, dtype=np.int64)
    node_of[rows_mask] = 0
    feat, thr, lft, rgt = [-1], [0.0], [-1], [-1]
    Gs = [float(g[rows_mask].sum())]
    Hs = [float(h[rows_mask].sum())]
    frontier = [0]

    for level in range(cfg.max_depth):
        if not frontier:
            break
        level_feats = features
        if cfg.colsample_bylevel < 1.0:
            k = max(1, int(round(cfg.colsample_bylevel * features.size)))
            level_feats = np.sort(rng.choice(features, size=k, replace=False))
        fr = np.asarray(frontier)
        slot = np.full(len(feat), -1, dtype=np.int64)
        slot[fr] = np.arange(fr.size)
        best_gain = np.zeros(fr.size)
        best_feat = np.full(fr.size, -1, dtype=np.int64)
        best_thr = np.zeros(fr.size)
        G_node = np.asarray(Gs)[fr]
        H_node = np.asarray(Hs)[fr]
        parent_score = _score(G_node, H_node, cfg)

        for j in level_feats:
            seq = order[j]
            seq = seq[node_of[seq] >= 0]
            seq = seq[slot[node_of[seq]] >= 0]
            if seq.size < 2:
                continue
            s = slot[node_of[seq]]
            perm = np.argsort(s, kind="stable")
            seq, s = seq[perm], s[perm]
            v = X[seq, j]
            cg = np.cumsum(g[seq])
            ch = np.cumsum(h[seq])
            starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
            base_g = np.r_[0.0, cg][starts][np.searchsorted(starts, np.arange(seq.size), side="right") - 1]
            base_h = np.r_[0.0, ch][starts][np.searchsorted(starts, np.arange(seq.size), side="right") - 1]
            GL = (cg - base_g)[:-1]
            HL = (ch - base_h)[:-1]
            sl = s[:-1]
            GR = G_node[sl] - GL
            HR = H_node[sl] - HL
            ok = (s[1:] == sl) & (v[1:] > v[:-1]) & (HL >= cfg.min_child_weight) & (HR >= cfg.min_child_weight)
            if not ok.any():
                continue
            gain = 0.5 * (_score(GL, HL, cfg) + _score(GR, HR, cfg) - parent_score[sl]) - cfg.gamma
            gain = np.where(ok, gain, -np.inf)
            pos = np.flatnonzero(ok)
            # best position per node: sort by (node, -gain, position)
            o = np.lexsort((pos, -gain[pos], sl[pos]))
            pos = pos[o]
            first = np.r_[True, sl[pos][1:] != sl[pos][:-1]]
            pos = pos[first]
            nodes = sl[pos]
            better = gain[pos] > best_gain[nodes]
            nodes, pos = nodes[better], pos[better]
            best_gain[nodes] = gain[pos]
            best_feat[nodes] = j
            best_thr[nodes] = (v[pos] + v[pos + 1]) / 2.0

        new_frontier = []
        for q, v_id in enumerate(frontier):
            if best_feat[q] < 0:
                continue
            j, t = int(best_feat[q]), float(best_thr[q])
            rows = np.flatnonzero(node_of == v_id)
            go_left = X[rows, j] < t
            ids = []
            for side in (rows[go_left], rows[~go_left]):
                ids.append(len(feat))
                feat.append(-1)
                thr.append(0.0)
                lft.append(-1)
                rgt.append(-1)
                Gs.append(float(g[side].sum()))
                Hs.append(float(h[side].sum()))
                node_of[side] = ids[-1]
            feat[v_id], thr[v_id] = j, t
            lft[v_id], rgt[v_id] = ids
            new_frontier.extend(ids)
        frontier = new_frontier

    G, H = np.asarray(Gs), np.asarray(Hs)
    value = -_soft(G, cfg.alpha) / (H + cfg.reg_lambda) * cfg.learning_rate
    feature = np.asarray(feat, dtype=np.int64)
    value[feature >= 0] = 0.0
    return RegTree(feature, np.asarray(thr), np.asarray(lft, dtype=np.int64), np.asarray(rgt, dtype=np.int64), value)


# ---------------------------------------------------------------------------
# boosted models


def _sigmoid(m):
    return 0.5 * (1.0 + np.tanh(0.5 * m))


def log_loss(target: np.ndarray, margin: np.ndarray) -> float:
    """Mean logistic loss, computed stably from margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - target * margin))


PRIOR_CLIP = 1e-12


@dataclass
class BinaryBooster:
    base_score: float
    trees: list
    train_loss: list = field(default_factory=list)

    def margin(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out


def _fit_binary(X, target, cfg: GbdtConfig, rng) -> BinaryBooster:
    n, p = X.shape
    prior = min(max(target.mean(), PRIOR_CLIP), 1.0 - PRIOR_CLIP)
    base = math.log(prior / (1.0 - prior))
    margin = np.full(n, base)
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    booster = BinaryBooster(base, [], [log_loss(target, margin)])
    all_features = np.arange(p)
    for _ in range(cfg.n_trees):
        prob = _sigmoid(margin)
        g = prob - target
        h = prob * (1.0 - prob)
        if cfg.subsample < 1.0:
            k = max(1, int(round(cfg.subsample * n)))
            rows_mask = np.zeros(n, dtype=bool)
            rows_mask[rng.choice(n, size=k, replace=False)] = True
        else:
            rows_mask = np.ones(n, dtype=bool)
        feats = all_features
        if cfg.colsample_bytree < 1.0:
            k = max(1, int(round(cfg.colsample_bytree * p)))
            feats = np.sort(rng.choice(all_features, size=k, replace=False))
        tree = _fit_tree(X, order, rows_mask, g, h, feats, cfg, rng)
        booster.trees.append(tree)
        margin += tree.predict(X)
        booster.train_loss.append(log_loss(target, margin))
    return booster


@dataclass
class GbdtModel:
    """Boosted trees; binary tasks use one booster, more classes one per class."""

    n_classes: int
    config: GbdtConfig
    boosters: list

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if len(self.boosters) == 1:
            p1 = _sigmoid(self.boosters[0].margin(X))
            P = np.zeros((X.shape[0], self.n_classes))
            P[:, 0] = 1.0 - p1
            P[:, 1] = p1
            return P
        P = np.column_stack([_sigmoid(b.margin(X)) for b in self.boosters])
        return P / np.maximum(P.sum(axis=1, keepdims=True), 1e-300)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def train_loss(self) -> list:
        """Per-iteration mean training log-loss (summed over one-vs-rest boosters)."""
        return [float(sum(v)) for v in zip(*(b.train_loss for b in self.boosters))]

    def max_tree_depth(self) -> int:
        return max((t.depth() for b in self.boosters for t in b.trees), default=0)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "config": asdict(self.config),
            "boosters": [
                {"base_score": b.base_score, "trees": [t.to_dict() for t in b.trees]} for b in self.boosters
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GbdtModel":
        boosters = [
            BinaryBooster(b["base_score"], [RegTree.from_dict(t) for t in b["trees"]]) for b in obj["boosters"]
        ]
        return cls(int(obj["n_classes"]), GbdtConfig(**obj["config"]), boosters)


def gbdt_train(data: Dataset, cfg: GbdtConfig = GbdtConfig(), seed: int = 0) -> GbdtModel:
    """Fit boosted trees; more than two classes are handled one-vs-rest."""
    if data.n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    X, y = data.features, data.labels
    if data.n_classes == 2:
        boosters = [_fit_binary(X, (y == 1).astype(float), cfg, rng)]
    else:
        boosters = [_fit_binary(X, (y == k).astype(float), cfg, rng) for k in range(data.n_classes)]
    return GbdtModel(data.n_classes, cfg, boosters)


# ---------------------------------------------------------------------------
# hybrid trees

SINGLE_TREE_CONFIG = GbdtConfig(n_trees=1, max_depth=5, gamma=0.0, alpha=0.0)
MIN_CLASS_SAMPLES = 3


@dataclass
class Extender:
    kind: str  # "majority" | "single_tree" | "gbdt"
    cls: int = 0
    model: Optional[GbdtModel] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "majority":
            return np.full(X.shape[0], self.cls, dtype=np.int64)
        return self.model.predict(X)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "class": int(self.cls)}
        if self.model is not None:
            out["model"] = self.model.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "Extender":
        model = GbdtModel.from_dict(obj["model"]) if "model" in obj else None
        return cls(obj["kind"], int(obj.get("class", 0)), model)


@dataclass
class HybridTree:
    shallow: Node
    extenders: dict  # leaf path -> Extender

    def __post_init__(self):
        paths = [p for p, _ in iter_leaves(self.shallow)]
        if sorted(paths) != sorted(self.extenders):
            raise ValueError("every leaf needs exactly one extender")
        self._paths = paths

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        pos = assign_leaves(self.shallow, X)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i, path in enumerate(self._paths):
            rows = np.flatnonzero(pos == i)
            if rows.size:
                out[rows] = self.extenders[path].predict(X[rows])
        return out

    def to_dict(self) -> dict:
        return {
            "shallow": to_dict(self.shallow),
            "extenders": {p: e.to_dict() for p, e in self.extenders.items()},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HybridTree":
        return cls(from_dict(obj["shallow"]), {p: Extender.from_dict(e) for p, e in obj["extenders"].items()})

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "HybridTree":
        return cls.from_dict(json.loads(text))


def predict_hybrid(h: HybridTree, x) -> int:
    return int(h.predict(np.asarray(x, dtype=float).reshape(1, -1))[0])


def agreement_rate(h: HybridTree, ds: Dataset) -> float:
    """Share of samples where the shallow tree and the hybrid predict the same class."""
    if ds.n == 0:
        return float("nan")
    return float(np.mean(predict_many(h.shallow, ds.features) == h.predict(ds.features)))


def stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> list:
    """Validation index sets with every class spread round-robin over the folds."""
    parts = [[] for _ in range(folds)]
    offset = 0
    for k in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == k))
        for r, i in enumerate(idx):
            parts[(r + offset) % folds].append(i)
        offset += idx.size
    return [np.sort(np.asarray(p, dtype=np.int64)) for p in parts]


def tune_gbdt(data: Dataset, iterations: int = 50, folds: int = 3, seed: int = 0) -> tuple:
    """Random search with stratified k-fold CV; returns ``(model, config, cv_accuracy)``."""
    rng = np.random.default_rng(seed)
    parts = stratified_folds(data.labels, folds, np.random.default_rng([seed, 1]))
    all_idx = np.arange(data.n)
    best_cfg, best_score = None, -np.inf
    for it in range(iterations):
        cfg = sample_gbdt_config(rng)
        scores = []
        for val in parts:
            tr = np.setdiff1d(all_idx, val)
            model = gbdt_train(data.subset(tr), cfg, seed + it)
            scores.append(np.mean(model.predict(data.features[val]) == data.labels[val]))
        score = float(np.mean(scores))
        if score > best_score:
            best_cfg, best_score = cfg, score
    return gbdt_train(data, best_cfg, seed), best_cfg, best_score


def extend_leaf(leaf_cls: int, data: Dataset, iterations: int = 50, folds: int = 3, seed: int = 0) -> Extender:
    """Pick and fit the extender for one leaf's training samples."""
    if data.n == 0:
        raise ValueError("cannot extend a leaf without training samples")
    counts = np.bincount(data.labels, minlength=data.n_classes)
    majority = leaf_cls if counts[leaf_cls] == counts.max() else int(np.argmax(counts))
    if counts[leaf_cls] == data.n:
        return Extender("majority", majority)
    present = counts[counts > 0]
    if present.min() < max(MIN_CLASS_SAMPLES, folds):
        ext = Extender("single_tree", majority, gbdt_train(data, SINGLE_TREE_CONFIG, seed))
    else:
        model, _, _ = tune_gbdt(data, iterations, folds, seed)
        ext = Extender("gbdt", majority, model)
    acc = np.mean(ext.predict(data.features) == data.labels)
    if acc < counts.max() / data.n:
        return Extender("majority", majority)
    return ext


def extend_tree(shallow: Node, train: Dataset, iterations: int = 50, folds: int = 3, seed: int = 0) -> HybridTree:
    """Fit an extender in every leaf of a reduced shallow tree."""
    pos = assign_leaves(shallow, train.features)
    extenders = {}
    for i, (path, leaf) in enumerate(iter_leaves(shallow)):
        rows = np.flatnonzero(pos == i)
        if rows.size == 0:
            raise ValueError(f"leaf {path or 'root'!r} has no training samples; reduce the tree first")
        extenders[path] = extend_leaf(leaf.cls, train.subset(rows), iterations, folds, seed + i)
    return HybridTree(shallow, extenders)
