"""CPLEX LP text writer and a reader for the subset the writer produces."""

from __future__ import annotations

import json
import math
import re

from .model import LinearConstraint, MioError, MioModel, MioVariable, natural_key

_TERMS_PER_LINE = 8


def _num(c: float) -> str:
    if float(c).is_integer() and abs(c) < 1e15:
        return str(int(c))
    return repr(float(c))


def _expr(terms) -> list:
    """Render ``(name, coef)`` pairs as wrapped LP expression lines."""
    parts = []
    for k, (name, c) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = name if mag == 1.0 else f"{_num(mag)} {name}"
        if k == 0:
            parts.append(f"- {body}" if sign == "-" else body)
        else:
            parts.append(f"{sign} {body}")
    lines = []
    for k in range(0, len(parts), _TERMS_PER_LINE):
        lines.append(" ".join(parts[k : k + _TERMS_PER_LINE]))
    return lines or ["0"]


def emit_lp(model: MioModel) -> str:
    """Serialize ``model`` as CPLEX LP text.

    Variables are ordered by natural name order and constraints by id, so
    equal models give byte-identical files. Model metadata is kept in a
    leading comment so :func:`parse_lp` can restore it.
    """
    out = [f"\\ minleaf {json.dumps(model.metadata, sort_keys=True)}", "Maximize"]
    obj = sorted(model.objective.items(), key=lambda kv: natural_key(kv[0]))
    lines = _expr(obj)
    out.append(f" obj: {lines[0]}")
    out.extend(f"   {ln}" for ln in lines[1:])

    out.append("Subject To")
    for con in sorted(model.constraints, key=lambda c: natural_key(c.id)):
        lines = _expr(con.terms)
        tail = f" {con.sense} {_num(con.rhs)}"
        if len(lines) == 1:
            out.append(f" {con.id}: {lines[0]}{tail}")
        else:
            out.append(f" {con.id}: {lines[0]}")
            out.extend(f"   {ln}" for ln in lines[1:-1])
            out.append(f"   {lines[-1]}{tail}")

    names = sorted(model.variables, key=natural_key)
    out.append("Bounds")
    for name in names:
        v = model.variables[name]
        if v.kind == "continuous":
            out.append(f" {_bound(v.lo)} <= {name} <= {_bound(v.hi)}")
    binaries = [nm for nm in names if model.variables[nm].kind == "binary"]
    if binaries:
        out.append("Binaries")
        for k in range(0, len(binaries), _TERMS_PER_LINE):
            out.append(" " + " ".join(binaries[k : k + _TERMS_PER_LINE]))
    out.append("End")
    return "\n".join(out) + "\n"


def _bound(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return _num(v)


# ---------------------------------------------------------------------------
# reader

_SECTIONS = {
    "maximize": "max",
    "maximum": "max",
    "max": "max",
    "minimize": "min",
    "minimum": "min",
    "min": "min",
    "subject to": "st",
    "such that": "st",
    "st": "st",
    "s.t.": "st",
    "bounds": "bounds",
    "bound": "bounds",
    "binaries": "bin",
    "binary": "bin",
    "bin": "bin",
    "generals": "gen",
    "general": "gen",
    "end": "end",
}

_TOKEN = re.compile(r"\s*(<=|>=|=<|=>|=|[+-]|[A-Za-z_][\w.\[\]{}#$%&~@!|/'`]*|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|:)")


def _tokenize(text: str, lineno: int) -> list:
    toks, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise MioError(f"LP line {lineno}: cannot parse near {text[pos:pos + 20]!r}")
        toks.append(m.group(1))
        pos = m.end()
    return toks


def _linear(tokens: list, where: str) -> dict:
    terms = {}
    sign, coef = 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
        elif re.fullmatch(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?", tok):
            coef = float(tok)
        else:
            c = sign * (1.0 if coef is None else coef)
            terms[tok] = terms.get(tok, 0.0) + c
            sign, coef = 1.0, None
    if coef is not None and not (len(tokens) == 1 and coef == 0.0):
        raise MioError(f"{where}: constant terms are not supported")
    return terms


def parse_lp(text: str) -> MioModel:
    """Read LP text produced by :func:`emit_lp` (or hand-written equivalents)."""
    meta = {}
    section = None
    sense = "max"
    stmts = {"obj": [], "st": [], "bounds": [], "bin": [], "gen": []}
    current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith("\\ minleaf "):
            meta = json.loads(raw[len("\\ minleaf "):])
            continue
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section in ("max", "min"):
                sense = section
                section = "obj"
            if section == "end":
                break
            current = None
            continue
        if section is None:
            raise MioError(f"LP line {lineno}: content before any section")
        toks = _tokenize(line, lineno)
        if section in ("obj", "st"):
            starts_new = len(toks) >= 2 and toks[1] == ":"
            if starts_new or current is None:
                current = [lineno, []]
                stmts[section].append(current)
            current[1].extend(toks)
        elif section == "bounds":
            stmts["bounds"].append((lineno, toks))
        else:
            stmts[section].extend(toks)

    if sense != "max":
        raise MioError("only maximization models are supported")

    objective = {}
    for lineno, toks in stmts["obj"]:
        if len(toks) >= 2 and toks[1] == ":":
            toks = toks[2:]
        objective.update(_linear(toks, f"LP line {lineno}"))

    constraints = []
    seen = set()
    for lineno, toks in stmts["st"]:
        if len(toks) < 2 or toks[1] != ":":
            raise MioError(f"LP line {lineno}: constraint without a name")
        cid = toks[0]
        body = toks[2:]
        ops = [k for k, tk in enumerate(body) if tk in ("<=", ">=", "=<", "=>", "=")]
        if len(ops) != 1:
            raise MioError(f"LP line {lineno}: constraint {cid} needs exactly one relation")
        k = ops[0]
        op = {"=<": "<=", "=>": ">="}.get(body[k], body[k])
        rhs_toks = body[k + 1 :]
        rhs_sign = -1.0 if rhs_toks and rhs_toks[0] == "-" else 1.0
        num = [t for t in rhs_toks if t not in "+-"]
        if len(num) != 1:
            raise MioError(f"LP line {lineno}: constraint {cid} needs a numeric right-hand side")
        terms = _linear(body[:k], f"LP line {lineno}")
        constraints.append(LinearConstraint(cid, tuple(terms.items()), op, rhs_sign * float(num[0])))
        seen.update(terms)

    binaries = set(stmts["bin"])
    generals = set(stmts["gen"])
    if generals - binaries:
        raise MioError("general integer variables are not supported")
    bounds = {}
    for lineno, toks in stmts["bounds"]:
        bounds.update(_parse_bound(toks, bounds, lineno))

    names = set(objective) | seen | binaries | set(bounds)
    variables = {}
    for name in sorted(names, key=natural_key):
        if name in binaries:
            variables[name] = MioVariable(name, "binary")
        else:
            lo, hi = bounds.get(name, (0.0, math.inf))
            variables[name] = MioVariable(name, "continuous", lo, hi)
    return MioModel(objective, variables, constraints, meta)


def _value(toks: list) -> float:
    s = "".join(toks).lower()
    if s in ("+inf", "inf", "+infinity", "infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    return float(s)


def _parse_bound(toks: list, known: dict, lineno: int) -> dict:
    rel = [k for k, t in enumerate(toks) if t in ("<=", ">=", "=<", "=>", "=")]
    if len(toks) == 2 and toks[1].lower() == "free":
        return {toks[0]: (-math.inf, math.inf)}
    try:
        if len(rel) == 2:
            lo = _value(toks[: rel[0]])
            name = toks[rel[0] + 1]
            hi = _value(toks[rel[1] + 1 :])
            if toks[rel[0]] in (">=", "=>"):
                lo, hi = hi, lo
            return {name: (lo, hi)}
        if len(rel) == 1:
            k = rel[0]
            op = toks[k]
            lhs, rhs = toks[:k], toks[k + 1 :]
            if len(lhs) == 1 and re.match(r"[A-Za-z_]", lhs[0]) and lhs[0].lower() not in ("inf", "infinity"):
                name, v = lhs[0], _value(rhs)
                flip = False
            else:
                name, v = rhs[0], _value(lhs)
                flip = True
            lo, hi = known.get(name, (0.0, math.inf))
            if op == "=":
                return {name: (v, v)}
            upper = (op in ("<=", "=<")) != flip
            return {name: (lo, v) if upper else (v, hi)}
    except (ValueError, IndexError):
        pass
    raise MioError(f"LP line {lineno}: cannot parse bound {' '.join(toks)!r}")
