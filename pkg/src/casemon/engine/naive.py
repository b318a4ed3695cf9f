"""From-scratch query evaluation.

The reference semantics: every operator recomputes its full result on each
call.  Handles correlated EXISTS directly (by evaluating the subquery per
candidate row with the row pushed onto the environment), so it works on
typechecked trees both before and after decorrelation -- which is exactly
what makes it useful as the second route in equivalence tests.
"""
from __future__ import annotations

from decimal import Decimal
from typing import Dict, Tuple

from ..lang import ir
from ..relational import Database
from .exprs import compile_expr

Bag = Dict[Tuple, int]

_cache: dict = {}


def _fn(e: ir.Expr):
    f = _cache.get(e)
    if f is None:
        f = compile_expr(e, exists_fn=_exists_closure)
        _cache[e] = f
    return f


# The database being queried is threaded through a stack rather than the
# closures themselves so compiled predicates stay content-addressed.
_db_stack: list = []


def _exists_closure(e: ir.Exists):
    def run(row, env):
        sub = _rel(e.query, _db_stack[-1], env + (row,))
        hit = bool(sub)
        return (not hit) if e.negated else hit

    return run


def evaluate(node: ir.Rel, db: Database) -> Bag:
    _db_stack.append(db)
    try:
        return _rel(node, db, ())
    finally:
        _db_stack.pop()


def _rel(node: ir.Rel, db: Database, env: tuple) -> Bag:
    if isinstance(node, ir.Scan):
        return dict(db.relation(node.relation).rows)
    if isinstance(node, ir.Derived):
        return _rel(node.query, db, env)
    if isinstance(node, ir.Join):
        left = _rel(node.left, db, env)
        right = _rel(node.right, db, env)
        pred = _fn(node.on) if node.on is not None else None
        out: Bag = {}
        for lt, lm in left.items():
            for rt, rm in right.items():
                row = lt + rt
                if pred is None or pred(row, env) is True:
                    out[row] = out.get(row, 0) + lm * rm
        return out
    if isinstance(node, ir.Filter):
        pred = _fn(node.predicate)
        child = _rel(node.child, db, env)
        return {t: m for t, m in child.items() if pred(t, env) is True}
    if isinstance(node, ir.Project):
        child = _rel(node.child, db, env)
        if node.items is ir.STAR:
            return child
        fns = [_fn(e) for _, e in node.items]
        out = {}
        for t, m in child.items():
            row = tuple(f(t, env) for f in fns)
            out[row] = out.get(row, 0) + m
        return out
    if isinstance(node, ir.GroupAgg):
        return _group(node, db, env)
    if isinstance(node, ir.Distinct):
        return {t: 1 for t in _rel(node.child, db, env)}
    if isinstance(node, ir.UnionAll):
        out = dict(_rel(node.left, db, env))
        for t, m in _rel(node.right, db, env).items():
            out[t] = out.get(t, 0) + m
        return out
    if isinstance(node, (ir.SemiJoin, ir.AntiJoin)):
        anti = isinstance(node, ir.AntiJoin)
        probe = _rel(node.probe, db, env)
        build = _rel(node.build, db, env)
        bfns = [_fn(be) for _, be in node.keys]
        pfns = [_fn(pe) for pe, _ in node.keys]
        present = set()
        for t in build:
            k = tuple(f(t, env) for f in bfns)
            if None not in k:
                present.add(k)
        out = {}
        for t, m in probe.items():
            k = tuple(f(t, env) for f in pfns)
            if None in k:
                hit = False  # a missing key matches nothing
            else:
                hit = k in present
            if hit != anti:
                out[t] = m
        return out
    raise ValueError("cannot evaluate %s" % type(node).__name__)


def _group(node: ir.GroupAgg, db: Database, env: tuple) -> Bag:
    child = _rel(node.child, db, env)
    gfns = [_fn(g) for _, g in node.groups]
    buckets: Dict[Tuple, list] = {}
    for t, m in child.items():
        k = tuple(f(t, env) for f in gfns)
        buckets.setdefault(k, []).append((t, m))
    out: Bag = {}
    for k, rows in buckets.items():
        vals = tuple(_agg(a, rows, env) for _, a in node.aggs)
        out[k + vals] = 1
    return out


def _agg(a: ir.Agg, rows, env):
    if a.operand is None:  # COUNT(*)
        return sum(m for _, m in rows)
    f = _fn(a.operand)
    if a.func == "count":
        if a.distinct:
            return len({f(t, env) for t, _ in rows if f(t, env) is not None})
        return sum(m for t, m in rows if f(t, env) is not None)
    vals = [(f(t, env), m) for t, m in rows]
    vals = [(v, m) for v, m in vals if v is not None]
    if not vals:
        return None
    if a.func == "sum":
        return sum(v * m for v, m in vals)
    if a.func == "avg":
        total = sum(v * m for v, m in vals)
        n = sum(m for _, m in vals)
        return Decimal(total) / Decimal(n)
    if a.func == "min":
        return min(v for v, _ in vals)
    if a.func == "max":
        return max(v for v, _ in vals)
    raise ValueError("unknown aggregate %r" % a.func)
