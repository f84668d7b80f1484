"""Dataset loading, [0, 1] normalization, feature increments and splitting."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np


class DataError(ValueError):
    """Raised when input data cannot be turned into a valid Dataset."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Normalized feature matrix with integer class labels.

    ``n_classes`` is stored explicitly so that a subset (e.g. a train split or
    the samples of one leaf) keeps the class space of the full dataset even if
    some classes are absent from it.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: tuple = ()
    class_names: tuple = ()
    encoding: str = "ordinal"

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DataError("labels must have one entry per sample")
        if X.shape[1] < 1:
            raise DataError("dataset needs at least one feature")
        if self.n_classes < 2:
            raise DataError("dataset needs at least two classes")
        if X.size and (not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0):
            raise DataError("feature values must lie in [0, 1]")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError("labels must lie in [0, n_classes)")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{j}" for j in range(X.shape[1])))
        if not self.class_names:
            object.__setattr__(self, "class_names", tuple(str(k) for k in range(self.n_classes)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def K(self) -> int:
        return self.n_classes

    def one_hot(self) -> np.ndarray:
        """Label indicator matrix ``Y`` with ``Y[i, k] = 1`` iff ``labels[i] == k``."""
        Y = np.zeros((self.n, self.n_classes))
        Y[np.arange(self.n), self.labels] = 1.0
        return Y

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.n_classes,
            self.feature_names,
            self.class_names,
            self.encoding,
        )


@dataclass(frozen=True)
class EpsilonVector:
    eps: np.ndarray
    eps_max: float


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_fraction: float = 0.8
    train_cap: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie strictly between 0 and 1")
        if self.train_cap < 1:
            raise DataError("train_cap must be at least 1")


def min_max_normalize(X: np.ndarray) -> np.ndarray:
    """Scale every column to [0, 1]; constant columns become all zeros."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    out = np.zeros_like(X)
    nz = span > 0
    out[:, nz] = (X[:, nz] - lo[nz]) / span[nz]
    # guard against rounding just outside the unit interval
    return np.clip(out, 0.0, 1.0)


def _parse_float(cell: str) -> Optional[float]:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(
    path: Union[str, os.PathLike],
    label_column: Union[str, int] = -1,
    encoding: str = "ordinal",
) -> Dataset:
    """Read a headed CSV file into a normalized :class:`Dataset`.

    A column whose cells are all numeric is treated as numeric. A column where
    no cell parses as a number is categorical and is encoded according to
    ``encoding`` (``"ordinal"`` in first-appearance order, or ``"one_hot"``).
    A column mixing both is rejected, pointing at the first offending cell.
    """
    if encoding not in ("ordinal", "one_hot"):
        raise DataError(f"unknown encoding {encoding!r}")
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file, header row required")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path}: no data rows")

    if isinstance(label_column, str) and label_column not in header:
        try:
            label_column = int(label_column)
        except ValueError:
            raise DataError(f"{path}: label column {label_column!r} not in header") from None
    if isinstance(label_column, int):
        if not -len(header) <= label_column < len(header):
            raise DataError(f"{path}: label column index {label_column} out of range")
        label_idx = label_column % len(header)
    else:
        label_idx = header.index(label_column)

    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for c, cell in enumerate(row):
            if cell.strip() == "" or cell.strip().upper() in ("NA", "NAN", "?"):
                raise DataError(f"{path}: missing value at row {r}, column {header[c]!r}")

    labels_raw = [row[label_idx].strip() for row in body]
    class_names = _ordered_classes(labels_raw)
    if len(class_names) < 2:
        raise DataError(f"{path}: label column {header[label_idx]!r} has a single class")
    class_index = {c: k for k, c in enumerate(class_names)}
    y = np.array([class_index[v] for v in labels_raw], dtype=np.int64)

    columns = []
    names = []
    for c, name in enumerate(header):
        if c == label_idx:
            continue
        cells = [row[c].strip() for row in body]
        parsed = [_parse_float(v) for v in cells]
        n_numeric = sum(v is not None for v in parsed)
        if n_numeric == len(cells):
            columns.append(np.array(parsed, dtype=float))
            names.append(name)
        elif n_numeric == 0:
            cats = list(dict.fromkeys(cells))
            if encoding == "ordinal":
                code = {v: i for i, v in enumerate(cats)}
                columns.append(np.array([code[v] for v in cells], dtype=float))
                names.append(name)
            else:
                for cat in cats:
                    columns.append(np.array([v == cat for v in cells], dtype=float))
                    names.append(f"{name}={cat}")
        else:
            bad = next(i for i, v in enumerate(parsed) if v is None)
            raise DataError(
                f"{path}: non-numeric cell {cells[bad]!r} at row {bad + 2}, column {name!r}"
            )
    if not columns:
        raise DataError(f"{path}: no feature columns")

    X = min_max_normalize(np.column_stack(columns))
    return Dataset(X, y, len(class_names), tuple(names), tuple(class_names), encoding)


def _ordered_classes(values: Sequence[str]) -> list:
    distinct = set(values)
    parsed = {v: _parse_float(v) for v in distinct}
    if all(p is not None for p in parsed.values()):
        return sorted(distinct, key=lambda v: (parsed[v], v))
    return sorted(distinct)


def write_csv(ds: Dataset, path, label_name: str = "label") -> None:
    """Write a dataset as CSV with class names in the label column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + [label_name])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [ds.class_names[y]])


def compute_epsilon(ds: Dataset) -> EpsilonVector:
    """Smallest gap between consecutive distinct values of every feature.

    A constant feature gets an increment of 1 so the left-branch constraints
    stay valid while no split on it can separate anything.
    """
    eps = np.ones(ds.p)
    for j in range(ds.p):
        gaps = np.diff(np.unique(ds.features[:, j]))
        if gaps.size:
            eps[j] = gaps.min()
    return EpsilonVector(eps, float(eps.max()))


def split_dataset(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple:
    """Shuffle with a seeded PCG64 generator and cut into train and test.

    The test part is always the last ``1 - train_fraction`` of the shuffled
    indices; ``train_cap`` only truncates the training part.
    """
    if ds.n < 2:
        raise DataError("need at least two samples to split")
    cut = int(math.floor(spec.train_fraction * ds.n))
    if min(cut, spec.train_cap) < 1 or cut >= ds.n:
        raise DataError(f"n={ds.n} too small for a nonempty train and test set")
    train_idx, test_idx = split_indices(ds.n, spec)
    return ds.subset(train_idx), ds.subset(test_idx)


def split_indices(n: int, spec: SplitSpec = SplitSpec()) -> tuple:
    """Index form of :func:`split_dataset` for callers that only need positions."""
    cut = int(math.floor(spec.train_fraction * n))
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[: min(cut, spec.train_cap)]), np.sort(perm[cut:])


def bundled_path(name: str = "compas_like") -> str:
    """Filesystem path of a CSV shipped with the package."""
    from importlib.resources import files

    path = files("minleaf").joinpath("data", f"{name}.csv")
    if not path.is_file():
        raise DataError(f"no bundled dataset named {name!r}")
    return str(path)


def load_bundled(name: str = "compas_like", encoding: str = "ordinal") -> Dataset:
    return load_csv(bundled_path(name), label_column=-1, encoding=encoding)
