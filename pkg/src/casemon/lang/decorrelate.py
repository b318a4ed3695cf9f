"""Rewrite EXISTS / NOT EXISTS subqueries into semi- and anti-joins.

Works on typechecked trees (column bindings are how correlation is
detected).  Supported shape: the subquery appears as a top-level conjunct
of a filter, and its own top-level filter may compare columns of the
subquery row against columns of the immediately enclosing row -- by
equality only.  Those conjuncts become join keys; everything else stays
on the subquery side.  Anything outside that shape raises
UnsupportedFeatureError rather than silently computing something else.

Negated existence turns into an anti-join, so a monitored constraint with
nested NOT EXISTS ends up as an anti-join over an anti-join; deletions
flowing out of those nodes are what later lets a case leave a pending
verdict even though the base log only ever grows.
"""
from __future__ import annotations

from typing import List, Tuple

from . import ir


class UnsupportedFeatureError(Exception):
    pass


def decorrelate(node: ir.Rel) -> ir.Rel:
    out = _rel(node)
    _audit(out)
    return out


def _rel(node: ir.Rel) -> ir.Rel:
    if isinstance(node, ir.Scan):
        return node
    if isinstance(node, ir.Derived):
        return ir.Derived(_rel(node.query), node.alias)
    if isinstance(node, ir.Join):
        if node.on is not None and ir.contains_exists(node.on):
            raise UnsupportedFeatureError("EXISTS is not supported in JOIN conditions")
        return ir.Join(_rel(node.left), _rel(node.right), node.on)
    if isinstance(node, ir.Filter):
        return _filter(node)
    if isinstance(node, ir.Project):
        if node.items is not ir.STAR:
            for _, e in node.items:
                if ir.contains_exists(e):
                    raise UnsupportedFeatureError("EXISTS is not supported in SELECT items")
        return ir.Project(_rel(node.child), node.items)
    if isinstance(node, ir.GroupAgg):
        for _, g in node.groups:
            if ir.contains_exists(g):
                raise UnsupportedFeatureError("EXISTS is not supported in GROUP BY")
        for _, a in node.aggs:
            if a.operand is not None and ir.contains_exists(a.operand):
                raise UnsupportedFeatureError("EXISTS is not supported inside aggregates")
        return ir.GroupAgg(_rel(node.child), node.groups, node.aggs)
    if isinstance(node, ir.Distinct):
        return ir.Distinct(_rel(node.child))
    if isinstance(node, ir.UnionAll):
        return ir.UnionAll(_rel(node.left), _rel(node.right))
    if isinstance(node, (ir.SemiJoin, ir.AntiJoin)):
        return type(node)(_rel(node.probe), _rel(node.build), node.keys)
    raise UnsupportedFeatureError("cannot rewrite %s" % type(node).__name__)


def _filter(node: ir.Filter) -> ir.Rel:
    child = _rel(node.child)
    plain: List[ir.Expr] = []
    subs: List[ir.Exists] = []
    for c in ir.split_conjuncts(node.predicate):
        if isinstance(c, ir.Exists):
            subs.append(c)
        elif ir.contains_exists(c):
            raise UnsupportedFeatureError(
                "EXISTS must be a top-level conjunct, not nested under OR/NOT/comparisons"
            )
        else:
            plain.append(c)
    for ex in subs:
        child = _apply_exists(child, ex)
    if plain:
        child = ir.Filter(child, ir.conjoin(plain))
    return child


def _apply_exists(probe: ir.Rel, ex: ir.Exists) -> ir.Rel:
    build = _rel(ex.query)
    # projections and duplicate elimination cannot change emptiness
    while isinstance(build, (ir.Project, ir.Distinct)):
        build = build.child
    keys: List[Tuple[ir.Expr, ir.Expr]] = []
    if isinstance(build, ir.Filter):
        keep: List[ir.Expr] = []
        for c in ir.split_conjuncts(build.predicate):
            pair = _classify(c)
            if pair is None:
                keep.append(c)
            else:
                keys.append(pair)
        inner = build.child
        build = ir.Filter(inner, ir.conjoin(keep)) if keep else inner
    ctor = ir.AntiJoin if ex.negated else ir.SemiJoin
    return ctor(probe, build, tuple(keys))


def _classify(c: ir.Expr):
    """A correlated equality yields a (probe_expr, build_expr) key pair.

    Local conjuncts return None and stay in the subquery.  Anything else
    correlated -- non-equalities, references two or more levels up, sides
    mixing inner and outer columns -- is unsupported.
    """
    levels = {
        x.bound()[0] for x in ir.walk_exprs(c) if isinstance(x, ir.Col)
    }
    if not levels or max(levels) == 0:
        return None
    if max(levels) > 1:
        raise UnsupportedFeatureError(
            "subquery may only reference the immediately enclosing query"
        )
    if not isinstance(c, ir.Cmp) or c.op != "=":
        raise UnsupportedFeatureError(
            "correlated predicates must be equality comparisons"
        )
    sides = []
    for side in (c.left, c.right):
        lv = {x.bound()[0] for x in ir.walk_exprs(side) if isinstance(x, ir.Col)}
        if lv <= {0}:
            sides.append("inner")
        elif lv == {1}:
            sides.append("outer")
        else:
            raise UnsupportedFeatureError(
                "correlated equality mixes subquery and outer columns on one side"
            )
    if sides == ["inner", "outer"]:
        return ir.shift_levels(c.right, -1), c.left
    if sides == ["outer", "inner"]:
        return ir.shift_levels(c.left, -1), c.right
    raise UnsupportedFeatureError(
        "predicate references only the outer query; move it out of the subquery"
    )


def _audit(node: ir.Rel):
    """Verify the rewritten tree is closed.

    After decorrelation every expression evaluates over exactly one row
    scope (its operator's input row), so any binding above level 0 means a
    correlation escaped the rewrite.
    """

    def check(e: ir.Expr):
        for x in ir.walk_exprs(e):
            if isinstance(x, ir.Col) and x.bound()[0] != 0:
                raise UnsupportedFeatureError(
                    "column %s is correlated in a way joins cannot express" % x.display()
                )
            if isinstance(x, ir.Exists):
                raise UnsupportedFeatureError("EXISTS survived rewriting; unsupported placement")

    if isinstance(node, ir.Join) and node.on is not None:
        check(node.on)
    elif isinstance(node, ir.Filter):
        check(node.predicate)
    elif isinstance(node, ir.Project) and node.items is not ir.STAR:
        for _, e in node.items:
            check(e)
    elif isinstance(node, ir.GroupAgg):
        for _, g in node.groups:
            check(g)
        for _, a in node.aggs:
            if a.operand is not None:
                check(a.operand)
    elif isinstance(node, (ir.SemiJoin, ir.AntiJoin)):
        for pe, be in node.keys:
            check(pe)
            check(be)
    for child in ir.rel_children(node):
        _audit(child)
