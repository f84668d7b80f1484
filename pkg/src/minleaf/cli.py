"""Command-line interface: ``minleaf <subcommand> [flags]``.

Exit codes: 0 on success, 1 when a module reports a domain error (bad data,
infeasible solution, ...), 2 on usage errors (unknown flags, missing
arguments, unreadable input paths).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import boost, cart, eval as evaluation, search, tree as trees
from .data import DataError, SplitSpec, load_csv, split_dataset
from .mio import MioError, build_mio, check_feasible, emit_lp, extract_tree, load_solution, warmstart_from_tree, write_solution

logger = logging.getLogger("minleaf")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` comments and ``[section]`` headers are ignored.

    Values are read as JSON when possible (numbers, booleans, quoted
    strings, lists) and kept as bare strings otherwise. Dashes in keys are
    treated as underscores so keys may be spelled like the flags.
    """
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line or (line.startswith("[") and line.endswith("]")):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = value.strip("'")
            out[key.replace("-", "_")] = parsed
    return out


def _jobs_default() -> int:
    raw = os.environ.get("MINLEAF_JOBS", "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise UsageError(f"MINLEAF_JOBS must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise UsageError("MINLEAF_JOBS must be >= 1")
    return jobs


def _seeds(text: str) -> list:
    """``"0-9"``, ``"0,3,5"`` or a mix such as ``"0-2,7"``."""
    out = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return out


# ---------------------------------------------------------------------------
# parser


def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="CSV file with a header row")
    p.add_argument("--label", default="-1", help="label column name or index (default: last column)")
    p.add_argument("--encoding", choices=("ordinal", "one_hot"), default="ordinal",
                   help="encoding of categorical feature columns")


def _add_model(p, depth_required=False):
    if depth_required:
        p.add_argument("--depth", type=int, required=True, help="tree depth")
    else:
        p.add_argument("--depth", type=int, default=4, help="tree depth (default 4)")
    p.add_argument("--nmin", type=int, default=50, help="minimum samples per non-empty leaf (default 50)")
    p.add_argument("--objective", choices=search.OBJECTIVES, default="leaf_accuracy",
                   help="leaf_accuracy (maximize the worst leaf) or misclassification (maximize correct samples)")


def _add_search(p):
    p.add_argument("--strategy", choices=search.STRATEGIES, default="warmstarted", help="exact search strategy")
    p.add_argument("--time-budget", type=float, default=60.0, help="seconds for the exact search (default 60)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minleaf", description="Shallow decision trees with the best worst-leaf accuracy.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file supplying defaults; explicit flags win")
        return p

    p = command("train", "Train a CART or exact tree and write tree JSON, DOT and metrics.")
    _add_data(p)
    _add_model(p)
    _add_search(p)
    p.add_argument("--method", choices=("cart", "exact"), default="exact", help="tree learner (default exact)")
    p.add_argument("--cart-iterations", type=int, default=0,
                   help="random-search iterations for --method cart; 0 trains the untuned depth/leaf-size tree")
    p.add_argument("--split", action="store_true", help="train on a seeded 80%% split and report test metrics too")
    p.add_argument("--seed", type=int, default=0, help="seed for splitting and tuning")
    p.add_argument("--out", default=".", help="output directory (default .)")

    p = command("extend", "Extend every leaf of a saved tree with its own model.")
    _add_data(p)
    p.add_argument("--tree", required=True, help="tree JSON written by train")
    p.add_argument("--iterations", type=int, default=50, help="random-search iterations per leaf (default 50)")
    p.add_argument("--folds", type=int, default=3, help="cross-validation folds per leaf (default 3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory (default .)")

    p = command("eval", "Run methods over seeded splits of one or more datasets and write reports.")
    p.add_argument("--data", action="append", required=True, help="CSV file; repeat for several datasets")
    p.add_argument("--label", default="-1", help="label column name or index (default: last column)")
    p.add_argument("--encoding", choices=("ordinal", "one_hot"), default="ordinal")
    _add_model(p)
    _add_search(p)
    p.add_argument("--methods", default="cart,exact",
                   help=f"comma-separated subset of {','.join(evaluation.METHODS)} (default cart,exact)")
    p.add_argument("--seeds", type=_seeds, default=list(range(10)), help="seed list such as 0-9 or 0,2,4 (default 0-9)")
    p.add_argument("--cart-iterations", type=int, default=100, help="CART random-search iterations (default 100)")
    p.add_argument("--cart-folds", type=int, default=5, help="CART cross-validation folds (default 5)")
    p.add_argument("--extend-iterations", type=int, default=50, help="per-leaf search iterations for hybrids (default 50)")
    p.add_argument("--extend-folds", type=int, default=3, help="per-leaf cross-validation folds (default 3)")
    p.add_argument("--train-cap", type=int, default=10_000, help="largest training set (default 10000)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: MINLEAF_JOBS or 1)")
    p.add_argument("--out", default="report", help="report directory (default report)")

    p = command("export-lp", "Write the tree model as an LP file plus a warmstart solution.")
    _add_data(p)
    _add_model(p, depth_required=True)
    p.add_argument("--seed", type=int, default=0, help="seed of the CART warmstart")
    p.add_argument("--out", default=".", help="output directory for model.lp and warmstart.sol")

    p = command("check", "Verify a solution file against the rebuilt model and print its tree.")
    _add_data(p)
    _add_model(p, depth_required=True)
    p.add_argument("--solution", required=True, help="'name value' lines, e.g. warmstart.sol")
    p.add_argument("--tol", type=float, default=1e-6, help="constraint tolerance (default 1e-6)")

    p = command("export-dot", "Render a saved tree as Graphviz DOT with per-leaf accuracies.")
    _add_data(p)
    p.add_argument("--tree", required=True, help="tree JSON written by train")
    p.add_argument("--test-data", help="optional CSV whose accuracies are shown in bold")
    p.add_argument("--out", default="-", help="output file, - for stdout (default)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    """Parse twice: once to find the subcommand and ``--config``, then with the file as defaults."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in subparser._actions}
        unknown = sorted(set(values) - dests - {"config"})
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(unknown)}")
        for action in subparser._actions:
            if action.dest in values:
                action.required = False
                if any(opt in argv or any(a.startswith(opt + "=") for a in argv) for opt in action.option_strings):
                    continue  # explicit flag wins (append actions would otherwise extend the file's list)
                val = values[action.dest]
                if action.dest == "seeds":
                    val = _seeds(",".join(map(str, val)) if isinstance(val, list) else val)
                elif action.dest == "data" and isinstance(val, str) and action.__class__.__name__ == "_AppendAction":
                    val = [val]
                elif action.type is not None and not isinstance(val, list):
                    val = action.type(val)
                if action.choices is not None and val not in action.choices:
                    raise UsageError(f"{args.config}: {action.dest} must be one of {list(action.choices)}")
                subparser.set_defaults(**{action.dest: val})
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# helpers


def _need_file(path, what="input"):
    if not path or not os.path.isfile(path):
        raise UsageError(f"{what} file not found: {path}")


def _load(args, path=None):
    path = path or args.data
    _need_file(path, "data")
    label = args.label
    if isinstance(label, str) and label.lstrip("-").isdigit():
        label = int(label)
    return load_csv(path, label_column=label, encoding=args.encoding)


def _load_tree(path):
    _need_file(path, "tree")
    with open(path) as fh:
        try:
            return trees.loads(fh.read())
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: not a tree JSON file ({exc})") from None


def _check_tree_fits(tree, data):
    used = [b.feature for b in _branches(tree)]
    if used and max(used) >= data.p:
        raise DataError(f"tree uses feature {max(used)} but the data has {data.p} features")


def _branches(node):
    if isinstance(node, trees.Branch):
        yield node
        yield from _branches(node.left)
        yield from _branches(node.right)


def format_tree(node, feature_names=(), class_names=(), indent="") -> str:
    """Indented plain-text rendering used by ``check``."""
    fname = (lambda j: feature_names[j]) if feature_names else (lambda j: f"x{j}")
    cname = (lambda k: class_names[k]) if class_names else str
    if isinstance(node, trees.Leaf):
        return f"{indent}predict {cname(node.cls)}\n"
    return (
        f"{indent}if {fname(node.feature)} < {node.threshold:.6g}:\n"
        + format_tree(node.left, feature_names, class_names, indent + "  ")
        + f"{indent}else:\n"
        + format_tree(node.right, feature_names, class_names, indent + "  ")
    )


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    data = _load(args)
    test = None
    if args.split:
        data, test = split_dataset(data, SplitSpec(seed=args.seed))
    cfg = search.SearchConfig(args.depth, args.nmin, args.objective, args.strategy, args.time_budget, args.seed)
    if args.nmin > data.n:
        raise DataError(f"--nmin {args.nmin} exceeds the {data.n} training samples")
    info = {"method": args.method, "depth": args.depth, "N_min": args.nmin, "seed": args.seed}
    if args.method == "cart":
        if args.cart_iterations > 0:
            tree, ccfg = cart.cart_search(data, args.cart_iterations, 5, args.seed, args.depth, args.nmin)
        else:
            ccfg = cart.default_warmstart_config(args.depth, args.nmin)
            tree = cart.cart_train(data, ccfg, args.seed)
        info["cart_config"] = ccfg.to_dict()
    else:
        res = search.solve(data, cfg)
        tree = res.tree
        info.update(
            objective=args.objective,
            strategy=args.strategy,
            objective_value=res.objective_value,
            proven_optimal=res.proven_optimal,
            best_bound=res.best_bound,
            nodes_explored=res.nodes_explored,
            elapsed=round(res.elapsed, 3),
        )
    info["leaves_before_reduction"] = trees.n_leaves(tree)
    tree = trees.reduce_tree(tree, data)
    info["leaves"] = trees.n_leaves(tree)
    train_stats = trees.leaf_stats(tree, data)
    info["train"] = {"leaf_accuracy": train_stats.leaf_accuracy, "model_accuracy": train_stats.model_accuracy}
    test_stats = None
    if test is not None:
        test_stats = trees.leaf_stats(tree, test)
        info["test"] = {"leaf_accuracy": test_stats.leaf_accuracy, "model_accuracy": test_stats.model_accuracy}

    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "tree.json"), trees.dumps(tree) + "\n")
    _write(
        os.path.join(args.out, "tree.dot"),
        trees.export_dot(tree, train_stats, test_stats, list(data.feature_names), list(data.class_names)),
    )
    _write(os.path.join(args.out, "metrics.json"), json.dumps(info, indent=2, sort_keys=True) + "\n")
    print(f"leaf accuracy: {train_stats.leaf_accuracy:.6g}")
    print(f"model accuracy: {train_stats.model_accuracy:.6g}")
    if test_stats is not None:
        print(f"test leaf accuracy: {test_stats.leaf_accuracy:.6g}")
        print(f"test model accuracy: {test_stats.model_accuracy:.6g}")
    return 0


def cmd_extend(args) -> int:
    data = _load(args)
    tree = _load_tree(args.tree)
    _check_tree_fits(tree, data)
    tree = trees.reduce_tree(tree, data)
    hybrid = boost.extend_tree(tree, data, args.iterations, args.folds, args.seed)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "hybrid.json"), hybrid.dumps() + "\n")
    kinds = {p or "root": e.kind for p, e in hybrid.extenders.items()}
    print("extenders: " + ", ".join(f"{p}={k}" for p, k in kinds.items()))
    print(f"shallow accuracy: {trees.model_accuracy(tree, data):.6g}")
    print(f"hybrid accuracy: {trees.model_accuracy(hybrid, data):.6g}")
    print(f"agreement rate: {boost.agreement_rate(hybrid, data):.6g}")
    return 0


def cmd_eval(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in evaluation.METHODS]
    if bad or not methods:
        raise UsageError(f"--methods must be a comma-separated subset of {','.join(evaluation.METHODS)}")
    jobs = args.jobs if args.jobs is not None else _jobs_default()
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    datasets = []
    for path in args.data:
        _need_file(path, "data")
        name = os.path.splitext(os.path.basename(path))[0]
        datasets.append((name, _load(args, path)))
    cfg = evaluation.EvalConfig(
        depth=args.depth,
        n_min=args.nmin,
        objective=args.objective,
        strategy=args.strategy,
        time_budget=args.time_budget,
        train_cap=args.train_cap,
        cart_iterations=args.cart_iterations,
        cart_folds=args.cart_folds,
        extend_iterations=args.extend_iterations,
        extend_folds=args.extend_folds,
    )
    report = evaluation.run_experiment(datasets, methods, args.seeds, cfg, jobs=jobs)
    paths = evaluation.emit_report(report, args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    if report.partial:
        print(f"warning: {sum(1 for r in report.records if r.error)} runs failed; see {paths['summary']}", file=sys.stderr)
    return 0


def _model(args, data):
    if not 1 <= args.nmin <= data.n:
        raise DataError(f"--nmin must lie in [1, {data.n}]")
    return build_mio(data, d=args.depth, n_min=args.nmin, objective=args.objective)


def cmd_export_lp(args) -> int:
    data = _load(args)
    model = _model(args, data)
    warm_tree = cart.cart_train(data, cart.default_warmstart_config(args.depth, args.nmin), args.seed)
    assignment = warmstart_from_tree(model, warm_tree, data)
    verdict = check_feasible(model, assignment)
    os.makedirs(args.out, exist_ok=True)
    lp_path = os.path.join(args.out, "model.lp")
    sol_path = os.path.join(args.out, "warmstart.sol")
    _write(lp_path, emit_lp(model))
    write_solution(assignment, sol_path, verdict.objective)
    print(f"model: {lp_path} ({len(model.variables)} variables, {len(model.constraints)} constraints)")
    print(f"warmstart: {sol_path} ({verdict})")
    return 0


def cmd_check(args) -> int:
    data = _load(args)
    _need_file(args.solution, "solution")
    model = _model(args, data)
    assignment = load_solution(args.solution, model)
    verdict = check_feasible(model, assignment, tol=args.tol)
    if not verdict.feasible:
        print(verdict)
        for cid, slack in verdict.violations:
            print(f"  {cid}: {slack:.6g}")
        return 1
    label = "Q" if model.objective_kind == "leaf_accuracy" else "correct"
    print(f"feasible, {label}={verdict.objective:.12g}")
    tree = trees.reduce_tree(extract_tree(model, assignment, check=False), data)
    print(format_tree(tree, data.feature_names, data.class_names), end="")
    return 0


def cmd_export_dot(args) -> int:
    data = _load(args)
    tree = _load_tree(args.tree)
    _check_tree_fits(tree, data)
    test_stats = None
    if args.test_data:
        test = _load(args, args.test_data)
        if test.p != data.p:
            raise DataError("--test-data has a different number of features")
        test_stats = trees.leaf_stats(tree, test)
    text = trees.export_dot(
        tree, trees.leaf_stats(tree, data), test_stats, list(data.feature_names), list(data.class_names)
    )
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write(args.out, text)
    return 0


COMMANDS = {
    "train": cmd_train,
    "extend": cmd_extend,
    "eval": cmd_eval,
    "export-lp": cmd_export_lp,
    "check": cmd_check,
    "export-dot": cmd_export_dot,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"minleaf: usage error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"minleaf: usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, MioError, ValueError, OSError) as exc:
        print(f"minleaf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
