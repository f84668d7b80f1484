"""Exact mixed-integer model: building, LP export, verification and encoding."""

from .lp import emit_lp, parse_lp
from .model import (
    OBJECTIVES,
    LinearConstraint,
    MioError,
    MioModel,
    MioVariable,
    build_mio,
    expected_sizes,
)
from .solution import (
    Verdict,
    check_feasible,
    extract_tree,
    load_solution,
    warmstart_from_tree,
    write_solution,
)

__all__ = [
    "OBJECTIVES",
    "LinearConstraint",
    "MioError",
    "MioModel",
    "MioVariable",
    "Verdict",
    "build_mio",
    "check_feasible",
    "emit_lp",
    "expected_sizes",
    "extract_tree",
    "load_solution",
    "parse_lp",
    "warmstart_from_tree",
    "write_solution",
]
