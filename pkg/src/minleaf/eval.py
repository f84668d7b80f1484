"""Experiment harness: seeded splits, metrics per method, significance tests, reports."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .boost import agreement_rate, extend_tree
from .cart import cart_search
from .data import Dataset, SplitSpec, split_dataset
from .search import SearchConfig, solve
from .tree import leaf_stats, model_accuracy, n_leaves, reduce_tree

logger = logging.getLogger(__name__)

METHODS = ("cart", "exact", "hybrid-cart", "hybrid-exact")

# Columns of the raw CSV. Wall time is kept out so reruns are byte-identical;
# it goes to timings.csv and the JSON summary instead.
RAW_FIELDS = (
    "dataset",
    "seed",
    "method",
    "train_leaf_accuracy",
    "test_leaf_accuracy",
    "train_accuracy",
    "test_accuracy",
    "hybrid_train_accuracy",
    "hybrid_test_accuracy",
    "agreement_rate",
    "leaves_before",
    "leaves_after",
    "objective_value",
    "proven_optimal",
    "error",
)
METRICS = RAW_FIELDS[3:13]
RANKED = ("test_leaf_accuracy", "test_accuracy", "hybrid_test_accuracy")


@dataclass(frozen=True)
class EvalConfig:
    depth: int = 4
    n_min: int = 50
    objective: str = "leaf_accuracy"
    strategy: str = "warmstarted"
    time_budget: float = 60.0
    train_fraction: float = 0.8
    train_cap: int = 10_000
    cart_iterations: int = 100
    cart_folds: int = 5
    extend_iterations: int = 50
    extend_folds: int = 3


@dataclass
class RunRecord:
    dataset: str
    seed: int
    method: str
    metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    error: str = ""

    def row(self) -> dict:
        out = {"dataset": self.dataset, "seed": self.seed, "method": self.method, "error": self.error}
        for m in METRICS + ("proven_optimal",):
            out[m] = self.metrics.get(m, "")
        return out


@dataclass
class EvalReport:
    config: EvalConfig
    datasets: list
    methods: list
    seeds: list
    records: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return any(r.error for r in self.records)

    def value(self, dataset, seed, method, metric):
        for r in self.records:
            if (r.dataset, r.seed, r.method) == (dataset, seed, method) and not r.error:
                v = r.metrics.get(metric)
                return None if v is None or v == "" else float(v)
        return None


# ---------------------------------------------------------------------------
# running


def _metrics(tree, train: Dataset, test: Dataset, before: int) -> dict:
    tr, te = leaf_stats(tree, train), leaf_stats(tree, test)
    return {
        "train_leaf_accuracy": tr.leaf_accuracy,
        "test_leaf_accuracy": te.leaf_accuracy,
        "train_accuracy": tr.model_accuracy,
        "test_accuracy": te.model_accuracy,
        "leaves_before": before,
        "leaves_after": n_leaves(tree),
    }


def _run_cell(name: str, data: Dataset, seed: int, methods: list, cfg: EvalConfig) -> list:
    """All requested methods on one (dataset, seed) split."""
    spec = SplitSpec(seed=seed, train_fraction=cfg.train_fraction, train_cap=cfg.train_cap)
    records = {m: RunRecord(name, seed, m) for m in methods}
    try:
        train, test = split_dataset(data, spec)
    except Exception as exc:  # recorded, the experiment goes on
        for r in records.values():
            r.error = f"{type(exc).__name__}: {exc}"
        return list(records.values())

    trees = {}

    def base(kind):
        if kind in trees:
            return trees[kind]
        start = time.perf_counter()
        if kind == "cart":
            tree, _ = base_cart()
            extra = {"objective_value": "", "proven_optimal": ""}
        else:
            warm, _ = base_cart()
            scfg = SearchConfig(cfg.depth, cfg.n_min, cfg.objective, cfg.strategy, cfg.time_budget, seed)
            res = solve(train, scfg, warmstart=warm)
            tree = res.tree
            extra = {"objective_value": res.objective_value, "proven_optimal": bool(res.proven_optimal)}
        reduced = reduce_tree(tree, train)
        out = (reduced, {**_metrics(reduced, train, test, n_leaves(tree)), **extra}, time.perf_counter() - start)
        trees[kind] = out
        return out

    cart_cache = {}

    def base_cart():
        if "tree" not in cart_cache:
            cart_cache["tree"] = cart_search(
                train, cfg.cart_iterations, cfg.cart_folds, seed, cfg.depth, min(cfg.n_min, train.n)
            )
        return cart_cache["tree"]

    for m in methods:
        rec = records[m]
        try:
            kind = m.split("-")[-1]
            tree, metrics, elapsed = base(kind)
            metrics = dict(metrics)
            if m.startswith("hybrid-"):
                start = time.perf_counter()
                hybrid = extend_tree(tree, train, cfg.extend_iterations, cfg.extend_folds, seed)
                metrics["hybrid_train_accuracy"] = model_accuracy(hybrid, train)
                metrics["hybrid_test_accuracy"] = model_accuracy(hybrid, test)
                metrics["agreement_rate"] = agreement_rate(hybrid, test)
                elapsed += time.perf_counter() - start
            rec.metrics, rec.wall_time = metrics, elapsed
        except Exception as exc:
            logger.warning("run %s/seed %d/%s failed: %s", name, seed, m, exc)
            rec.error = f"{type(exc).__name__}: {exc}"
    return list(records.values())


def run_experiment(
    datasets: list,
    methods: list = ("cart", "exact"),
    seeds: list = tuple(range(10)),
    cfg: EvalConfig = EvalConfig(),
    jobs: int = 1,
) -> EvalReport:
    """Train and evaluate every method on every (dataset, seed) split.

    ``datasets`` holds ``(name, Dataset)`` pairs. Exact methods start from
    the tuned CART tree of the same split; hybrids extend the reduced tree of
    their base method. A failing run is recorded with its error message.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("at least one method is required")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    cells = [(name, data, int(seed), methods, cfg) for name, data in datasets for seed in seeds]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, *zip(*cells)))
    else:
        results = [_run_cell(*c) for c in cells]
    report = EvalReport(cfg, [name for name, _ in datasets], methods, [int(s) for s in seeds])
    report.records = [r for cell in results for r in cell]
    return report


# ---------------------------------------------------------------------------
# statistics


def sign_test(wins: int, losses: int) -> float:
    """Exact two-sided sign test; ties must be dropped beforehand."""
    n = wins + losses
    if wins < 0 or losses < 0 or n < 1:
        raise ValueError("need wins + losses >= 1")
    k = max(wins, losses)
    tail = Fraction(sum(math.comb(n, i) for i in range(k, n + 1)), 2**n)
    return float(min(Fraction(1), 2 * tail))


def midranks(values) -> np.ndarray:
    """Ranks starting at 1 with ties given the average of their positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    start = 0
    for end in range(1, v.size + 1):
        if end == v.size or sv[end] != sv[start]:
            ranks[order[start:end]] = (start + 1 + end) / 2.0
            start = end
    return ranks


EXACT_MAX = 20


def wilcoxon_signed_rank(differences) -> tuple:
    """Two-sided Wilcoxon signed-rank test; returns ``(W, p)`` with ``W = min(W+, W-)``.

    Zero differences are dropped and tied magnitudes get mid-ranks. Up to
    ``EXACT_MAX`` nonzero differences the p-value counts sign patterns
    exactly; beyond that a tie-corrected normal approximation is used.
    """
    d = np.asarray(differences, dtype=float)
    d = d[d != 0]
    m = d.size
    if m == 0:
        raise ValueError("all differences are zero")
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    W = min(w_plus, w_minus)
    if m <= EXACT_MAX:
        # mid-ranks are multiples of 1/2, so doubled ranks are integers and
        # the distribution of the positive rank sum over all 2^m sign
        # patterns can be counted exactly
        twice = np.rint(2 * ranks).astype(np.int64)
        total = int(twice.sum())
        counts = np.zeros(total + 1, dtype=object)
        counts[0] = 1
        for r in twice:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: total + 1 - r]
            counts = counts + shifted
        limit = int(round(2 * W))
        tail = Fraction(int(sum(counts[: limit + 1])), 2**m)
        return W, float(min(Fraction(1), 2 * tail))
    mean = m * (m + 1) / 4.0
    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = m * (m + 1) * (2 * m + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    if var <= 0:
        return W, 1.0
    z = (W - mean) / math.sqrt(var)
    return W, min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def dataset_means(report: EvalReport, metric: str) -> dict:
    """``{(dataset, method): mean over successful seeds}``."""
    out = {}
    for ds in report.datasets:
        for m in report.methods:
            vals = [report.value(ds, s, m, metric) for s in report.seeds]
            vals = [v for v in vals if v is not None and not math.isnan(v)]
            out[(ds, m)] = float(np.mean(vals)) if vals else None
    return out


def dataset_ranks(report: EvalReport, metric: str) -> dict:
    """Rank methods per dataset by mean ``metric`` (1 = best, ties averaged).

    Methods without a value on a dataset are left out of that dataset's ranking.
    """
    means = dataset_means(report, metric)
    out = {}
    for ds in report.datasets:
        present = [m for m in report.methods if means[(ds, m)] is not None]
        if not present:
            continue
        r = midranks([-means[(ds, m)] for m in present])
        for m, v in zip(present, r):
            out[(ds, m)] = float(v)
    return out


def mean_ranks(report: EvalReport, metric: str) -> dict:
    ranks = dataset_ranks(report, metric)
    out = {}
    for m in report.methods:
        vals = [ranks[(ds, m)] for ds in report.datasets if (ds, m) in ranks]
        out[m] = float(np.mean(vals)) if vals else None
    return out


def compare(report: EvalReport, a: str, b: str, metric: str) -> dict:
    """Paired comparison of two methods over every (dataset, seed) pair."""
    diffs = []
    for ds in report.datasets:
        for s in report.seeds:
            va, vb = report.value(ds, s, a, metric), report.value(ds, s, b, metric)
            if va is None or vb is None or math.isnan(va) or math.isnan(vb):
                continue
            diffs.append(va - vb)
    wins = sum(x > 0 for x in diffs)
    losses = sum(x < 0 for x in diffs)
    out = {
        "a": a,
        "b": b,
        "metric": metric,
        "pairs": len(diffs),
        "wins": wins,
        "losses": losses,
        "ties": len(diffs) - wins - losses,
        "mean_difference": float(np.mean(diffs)) if diffs else None,
        "sign_p": sign_test(wins, losses) if wins + losses else None,
        "wilcoxon_W": None,
        "wilcoxon_p": None,
    }
    if wins + losses:
        out["wilcoxon_W"], out["wilcoxon_p"] = wilcoxon_signed_rank(diffs)
    return out


# ---------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(round(v, 12))


def aggregate_rows(report: EvalReport) -> list:
    """One row per (dataset, method) with mean and std of every metric."""
    ranks = {metric: dataset_ranks(report, metric) for metric in RANKED}
    cart_means = dataset_means(report, "test_leaf_accuracy") if "cart" in report.methods else None
    rows = []
    for ds in report.datasets:
        for m in report.methods:
            ok = [r for r in report.records if (r.dataset, r.method) == (ds, m) and not r.error]
            row = {"dataset": ds, "method": m, "runs": len(ok)}
            for metric in METRICS:
                vals = [r.metrics.get(metric) for r in ok]
                vals = np.array([float(v) for v in vals if v is not None and v != ""], dtype=float)
                vals = vals[~np.isnan(vals)]
                row[f"{metric}_mean"] = float(vals.mean()) if vals.size else None
                row[f"{metric}_std"] = float(vals.std()) if vals.size else None
            for metric in RANKED:
                row[f"rank_{metric}"] = ranks[metric].get((ds, m))
            if cart_means is not None:
                mine = row["test_leaf_accuracy_mean"]
                ref = cart_means[(ds, "cart")]
                row["test_leaf_accuracy_gain_vs_cart"] = None if mine is None or ref is None else mine - ref
            rows.append(row)
    return rows


def aggregate_fields(report: EvalReport) -> list:
    fields = ["dataset", "method", "runs"]
    for metric in METRICS:
        fields += [f"{metric}_mean", f"{metric}_std"]
    fields += [f"rank_{metric}" for metric in RANKED]
    if "cart" in report.methods:
        fields.append("test_leaf_accuracy_gain_vs_cart")
    return fields


def summary(report: EvalReport) -> dict:
    comparisons = []
    for a, b in itertools.combinations(report.methods, 2):
        for metric in ("test_leaf_accuracy", "test_accuracy"):
            comparisons.append(compare(report, a, b, metric))
    return {
        "config": asdict(report.config),
        "datasets": report.datasets,
        "methods": report.methods,
        "seeds": report.seeds,
        "partial": report.partial,
        "failures": [
            {"dataset": r.dataset, "seed": r.seed, "method": r.method, "error": r.error}
            for r in report.records
            if r.error
        ],
        "mean_ranks": {metric: mean_ranks(report, metric) for metric in RANKED},
        "comparisons": comparisons,
        "wall_time": {m: float(sum(r.wall_time for r in report.records if r.method == m)) for m in report.methods},
    }


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def emit_report(report: EvalReport, out_dir) -> dict:
    """Write ``raw.csv``, ``aggregate.csv``, ``timings.csv`` and ``summary.json``.

    Returns the paths written, keyed by kind.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc
    paths = {k: os.path.join(out_dir, f) for k, f in
             (("raw", "raw.csv"), ("aggregate", "aggregate.csv"), ("timings", "timings.csv"), ("summary", "summary.json"))}

    with open(paths["raw"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_FIELDS)
        for r in report.records:
            row = r.row()
            w.writerow([_fmt(row[f]) if f not in ("dataset", "method", "error") else row[f] for f in RAW_FIELDS])

    fields = aggregate_fields(report)
    with open(paths["aggregate"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for row in aggregate_rows(report):
            w.writerow([row[f] if f in ("dataset", "method") else _fmt(row[f]) for f in fields])

    with open(paths["timings"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "seed", "method", "wall_time"])
        for r in report.records:
            w.writerow([r.dataset, r.seed, r.method, f"{r.wall_time:.3f}"])

    with open(paths["summary"], "w") as fh:
        json.dump(_json_safe(summary(report)), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
