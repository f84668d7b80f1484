"""Mixed-integer model of a depth-d tree maximizing its minimum leaf accuracy.

Variables use canonical names with 0-based indices (samples ``i``, leaves
``t`` numbered left to right, branch nodes ``m`` breadth first, classes
``k``, features ``j``)::

    Q        leaf accuracy of the tree (objective)
    z_i_t    sample i is routed to leaf t                  binary
    s_i_t    accuracy share of sample i in leaf t          [0, 1]
    S_i_t    share counted only if i is classified right   [0, 1]
    r_t      common share of all samples in leaf t         [0, 1]
    l_t      leaf t is non-empty                           binary
    c_k_t    leaf t predicts class k                       binary
    a_j_m    branch m splits on feature j                  binary
    b_m      threshold of branch m                         [0, 1]

With ``objective="misclassification"`` the accuracy-share block is replaced
by binary ``S_i_t`` marking correctly classified samples, and the objective
is their sum.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..data import Dataset, EpsilonVector, compute_epsilon
from ..tree import TreeTopology

OBJECTIVES = ("leaf_accuracy", "misclassification")


class MioError(ValueError):
    pass


@dataclass(frozen=True)
class MioVariable:
    name: str
    kind: str  # "binary" | "continuous"
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("binary", "continuous"):
            raise MioError(f"unknown variable kind {self.kind!r}")
        if self.kind == "binary" and (self.lo, self.hi) != (0.0, 1.0):
            raise MioError(f"binary variable {self.name} must have bounds [0, 1]")


@dataclass(frozen=True)
class LinearConstraint:
    id: str
    terms: tuple  # ((name, coef), ...)
    sense: str  # "<=" | "=" | ">="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", "=", ">="):
            raise MioError(f"bad sense {self.sense!r} in {self.id}")
        names = [v for v, _ in self.terms]
        if len(set(names)) != len(names):
            raise MioError(f"duplicate variable in constraint {self.id}")
        if not all(np.isfinite(c) for _, c in self.terms) or not np.isfinite(self.rhs):
            raise MioError(f"non-finite coefficient in constraint {self.id}")


@dataclass(eq=False)
class MioModel:
    """Linear model with a maximization objective.

    ``data`` and ``eps`` keep the training set and increments the model was
    built from. They are not part of the model's structure and do not
    survive an LP round trip.
    """

    objective: dict  # name -> coefficient, maximized
    variables: dict  # name -> MioVariable, in insertion order
    constraints: list
    metadata: dict = field(default_factory=dict)
    data: Optional[Dataset] = None
    eps: Optional[EpsilonVector] = None

    def structure(self) -> tuple:
        """Hashable canonical form used for structural comparison."""
        return (
            tuple(sorted(self.objective.items())),
            tuple(sorted((v.name, v.kind, v.lo, v.hi) for v in self.variables.values())),
            tuple(sorted((c.id, tuple(sorted(c.terms)), c.sense, c.rhs) for c in self.constraints)),
        )

    def same_structure(self, other: "MioModel") -> bool:
        return self.structure() == other.structure()

    @property
    def depth(self) -> int:
        return int(self.metadata["d"])

    @property
    def objective_kind(self) -> str:
        return self.metadata.get("objective", "leaf_accuracy")


_NAT = re.compile(r"(\d+)")


def natural_key(name: str) -> tuple:
    """Sort key ordering ``z_2_0`` before ``z_10_0``."""
    return tuple(int(p) if p.isdigit() else p for p in _NAT.split(name))


def expected_sizes(n: int, p: int, K: int, d: int, objective: str = "leaf_accuracy") -> dict:
    """Closed-form variable and constraint counts of :func:`build_mio`."""
    L, B = 2**d, 2**d - 1
    if objective == "leaf_accuracy":
        n_vars = 3 * n * L + 2 * L + K * L + p * B + B + 1
        n_cons = 7 * n * L + 4 * L + n * L * d + n + B
    else:
        n_vars = 2 * n * L + L + K * L + p * B + B
        n_cons = 3 * n * L + 2 * L + n * L * d + n + B
    return {"variables": n_vars, "constraints": n_cons}


def build_mio(
    train: Dataset,
    eps: Optional[EpsilonVector] = None,
    d: int = 4,
    n_min: int = 50,
    objective: str = "leaf_accuracy",
) -> MioModel:
    """Assemble the full model for ``train`` at depth ``d``."""
    if objective not in OBJECTIVES:
        raise MioError(f"objective must be one of {OBJECTIVES}")
    if d < 1:
        raise MioError("depth must be >= 1")
    if not 1 <= n_min <= train.n:
        raise MioError(f"N_min={n_min} must lie in [1, n={train.n}]")
    if eps is None:
        eps = compute_epsilon(train)

    n, p, K = train.n, train.p, train.n_classes
    X, y = train.features, train.labels
    topo = TreeTopology(d)
    L, B = topo.n_leaf, topo.n_branch
    accuracy = objective == "leaf_accuracy"

    variables = {}

    def var(name, kind, lo=0.0, hi=1.0):
        variables[name] = MioVariable(name, kind, lo, hi)

    if accuracy:
        var("Q", "continuous")
    for i in range(n):
        for t in range(L):
            var(f"z_{i}_{t}", "binary")
            if accuracy:
                var(f"s_{i}_{t}", "continuous")
                var(f"S_{i}_{t}", "continuous")
            else:
                var(f"S_{i}_{t}", "binary")
    for t in range(L):
        if accuracy:
            var(f"r_{t}", "continuous")
        var(f"l_{t}", "binary")
        for k in range(K):
            var(f"c_{k}_{t}", "binary")
    for m in range(B):
        for j in range(p):
            var(f"a_{j}_{m}", "binary")
        var(f"b_{m}", "continuous")

    cons = []

    def add(cid, terms, sense, rhs):
        cons.append(LinearConstraint(cid, tuple((v, float(c)) for v, c in terms if c != 0.0), sense, float(rhs)))

    for t in range(L):
        if accuracy:
            add(f"acc_{t}", [("Q", 1.0), *((f"S_{i}_{t}", -1.0) for i in range(n)), (f"l_{t}", 1.0)], "<=", 1.0)
            add(f"ssum_{t}", [(f"l_{t}", 1.0), *((f"s_{i}_{t}", -1.0) for i in range(n))], "=", 0.0)
        add(f"lcls_{t}", [(f"l_{t}", 1.0), *((f"c_{k}_{t}", -1.0) for k in range(K))], "=", 0.0)
        add(f"nmin_{t}", [*((f"z_{i}_{t}", 1.0) for i in range(n)), (f"l_{t}", -float(n_min))], ">=", 0.0)

    for i in range(n):
        yi = int(y[i])
        for t in range(L):
            z, S, c = f"z_{i}_{t}", f"S_{i}_{t}", f"c_{yi}_{t}"
            if accuracy:
                s, r = f"s_{i}_{t}", f"r_{t}"
                add(f"spot_{i}_{t}", [(s, 1.0), (z, -1.0)], "<=", 0.0)
                add(f"refu_{i}_{t}", [(r, 1.0), (s, -1.0), (z, 1.0)], "<=", 1.0)
                add(f"refl_{i}_{t}", [(r, 1.0), (s, -1.0), (z, -1.0)], ">=", -1.0)
                add(f"sacc_{i}_{t}", [(S, 1.0), (s, -1.0)], "<=", 0.0)
                add(f"scls_{i}_{t}", [(S, 1.0), (c, -1.0)], "<=", 0.0)
                add(f"slnk_{i}_{t}", [(S, 1.0), (s, -1.0), (c, -1.0)], ">=", -1.0)
            else:
                add(f"octz_{i}_{t}", [(S, 1.0), (z, -1.0)], "<=", 0.0)
                add(f"octc_{i}_{t}", [(S, 1.0), (c, -1.0)], "<=", 0.0)
            add(f"used_{i}_{t}", [(z, 1.0), (f"l_{t}", -1.0)], "<=", 0.0)

            left_anc, right_anc = topo.ancestors(t)
            for m in right_anc:
                add(
                    f"splr_{i}_{t}_{m}",
                    [*((f"a_{j}_{m}", X[i, j]) for j in range(p)), (f"b_{m}", -1.0), (z, -1.0)],
                    ">=",
                    -1.0,
                )
            for m in left_anc:
                big_m = 1.0 + eps.eps_max
                add(
                    f"spll_{i}_{t}_{m}",
                    [*((f"a_{j}_{m}", X[i, j] + eps.eps[j]) for j in range(p)), (f"b_{m}", -1.0), (z, big_m)],
                    "<=",
                    big_m,
                )
        add(f"asgn_{i}", [(f"z_{i}_{t}", 1.0) for t in range(L)], "=", 1.0)

    for m in range(B):
        add(f"feat_{m}", [(f"a_{j}_{m}", 1.0) for j in range(p)], "=", 1.0)

    if accuracy:
        objective_terms = {"Q": 1.0}
    else:
        objective_terms = {f"S_{i}_{t}": 1.0 for i in range(n) for t in range(L)}

    meta = {"n": n, "p": p, "K": K, "d": d, "N_min": n_min, "objective": objective}
    return MioModel(objective_terms, variables, cons, meta, train, eps)
