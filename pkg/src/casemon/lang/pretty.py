"""Render IR back to dialect text.

Inverts the parser's lowering exactly: aggregate output references become
aggregate calls again, references to composite group expressions are
expanded, auto-generated column names are omitted.  The contract, checked
by tests, is that parsing + typechecking the rendered text reproduces the
tree structurally.
"""
from __future__ import annotations

from typing import Dict

from ..values import Ts
from . import ir

# precedence levels for parenthesization
_P_OR, _P_AND, _P_NOT, _P_CMP, _P_ADD, _P_MUL, _P_NEG, _P_ATOM = range(1, 9)


def pretty_print(rel: ir.Rel) -> str:
    return _query(rel)


def _query(node: ir.Rel) -> str:
    if isinstance(node, ir.Distinct) and isinstance(node.child, ir.UnionAll):
        u = node.child
        return "%s UNION %s" % (_query(u.left), _block(u.right))
    if isinstance(node, ir.UnionAll):
        return "%s UNION ALL %s" % (_query(node.left), _block(node.right))
    return _block(node)


def _block(node: ir.Rel) -> str:
    if isinstance(node, ir.UnionAll) or (
        isinstance(node, ir.Distinct) and isinstance(node.child, ir.UnionAll)
    ):
        return "(%s)" % _query(node)
    distinct = False
    if isinstance(node, ir.Distinct):
        distinct = True
        node = node.child
    if not isinstance(node, ir.Project):
        raise ValueError("not a canonical query tree: %s" % type(node).__name__)
    below = node.child
    having = group = None
    if isinstance(below, ir.Filter) and isinstance(below.child, ir.GroupAgg):
        having, group, below = below.predicate, below.child, below.child.child
    elif isinstance(below, ir.GroupAgg):
        group, below = below, below.child
    where = None
    if isinstance(below, ir.Filter):
        where, below = below.predicate, below.child

    agg_map: Dict[str, ir.Agg] = {}
    comp_map: Dict[str, ir.Expr] = {}
    if group is not None:
        agg_map = {nm: a for nm, a in group.aggs}
        comp_map = {nm: g for nm, g in group.groups if not isinstance(g, ir.Col)}

    def resugar(e: ir.Expr) -> ir.Expr:
        if isinstance(e, ir.Col) and e.qualifier is None:
            if e.name in agg_map:
                return agg_map[e.name]
            if e.name in comp_map:
                return comp_map[e.name]
            return e
        if isinstance(e, (ir.Lit, ir.Col, ir.Exists, ir.Agg)):
            return e
        if isinstance(e, ir.Arith):
            return ir.Arith(e.op, resugar(e.left), resugar(e.right))
        if isinstance(e, ir.Neg):
            return ir.Neg(resugar(e.operand))
        if isinstance(e, ir.Cmp):
            return ir.Cmp(e.op, resugar(e.left), resugar(e.right))
        if isinstance(e, ir.And):
            return ir.And(resugar(e.left), resugar(e.right))
        if isinstance(e, ir.Or):
            return ir.Or(resugar(e.left), resugar(e.right))
        if isinstance(e, ir.Not):
            return ir.Not(resugar(e.operand))
        if isinstance(e, ir.ExtractField):
            return ir.ExtractField(e.field, resugar(e.operand))
        if isinstance(e, ir.MinutesBetween):
            return ir.MinutesBetween(resugar(e.start), resugar(e.end))
        if isinstance(e, ir.TruncTs):
            return ir.TruncTs(e.unit, resugar(e.operand))
        raise ValueError("cannot render %r" % (e,))

    parts = ["SELECT DISTINCT" if distinct else "SELECT"]
    if node.items is ir.STAR:
        parts.append("*")
    else:
        rendered = []
        agg_pos = {nm: i for i, (nm, _) in enumerate(group.aggs)} if group else {}
        for i, (name, e) in enumerate(node.items):
            d = resugar(e)
            if isinstance(d, ir.Agg) and isinstance(e, ir.Col):
                bare = name == e.name and name == "_a%d" % agg_pos[e.name]
            elif isinstance(e, ir.Col) and e.qualifier is None and e.name in comp_map:
                pos = [nm for nm, _ in group.groups].index(e.name)
                bare = name == e.name and name == "_g%d" % pos
            elif isinstance(d, ir.Col):
                bare = d.name == name
            else:
                bare = name == "_c%d" % i
            text = _expr(d, _P_OR)
            rendered.append(text if bare else "%s AS %s" % (text, name))
        parts.append(", ".join(rendered))
    parts.append("FROM")
    parts.append(_from(below))
    if where is not None:
        parts.append("WHERE")
        parts.append(_expr(where, _P_OR))
    if group is not None and group.groups:
        parts.append("GROUP BY")
        parts.append(", ".join(_expr(g, _P_OR) for _, g in group.groups))
    if having is not None:
        parts.append("HAVING")
        parts.append(_expr(resugar(having), _P_OR))
    return " ".join(parts)


def _from(tree: ir.Rel) -> str:
    if isinstance(tree, ir.Join):
        left = _from(tree.left)
        right = _leaf(tree.right)
        if tree.on is None:
            return "%s, %s" % (left, right)
        return "%s JOIN %s ON %s" % (left, right, _expr(tree.on, _P_OR))
    return _leaf(tree)


def _leaf(node: ir.Rel) -> str:
    if isinstance(node, ir.Scan):
        return node.relation if node.alias is None else "%s %s" % (node.relation, node.alias)
    if isinstance(node, ir.Derived):
        return "(%s) %s" % (_query(node.query), node.alias)
    raise ValueError("not a canonical FROM tree: %s" % type(node).__name__)


def _expr(e: ir.Expr, prec: int) -> str:
    text, own = _expr_prec(e)
    return "(%s)" % text if own < prec else text


def _expr_prec(e: ir.Expr):
    if isinstance(e, ir.Lit):
        return _lit(e), _P_ATOM
    if isinstance(e, ir.Col):
        return e.display(), _P_ATOM
    if isinstance(e, ir.Or):
        return "%s OR %s" % (_expr(e.left, _P_OR), _expr(e.right, _P_OR + 1)), _P_OR
    if isinstance(e, ir.And):
        return "%s AND %s" % (_expr(e.left, _P_AND), _expr(e.right, _P_AND + 1)), _P_AND
    if isinstance(e, ir.Not):
        return "NOT %s" % _expr(e.operand, _P_NOT), _P_NOT
    if isinstance(e, ir.Cmp):
        return (
            "%s %s %s" % (_expr(e.left, _P_ADD), e.op, _expr(e.right, _P_ADD)),
            _P_CMP,
        )
    if isinstance(e, ir.Arith):
        p = _P_MUL if e.op in "*/" else _P_ADD
        return (
            "%s %s %s" % (_expr(e.left, p), e.op, _expr(e.right, p + 1)),
            p,
        )
    if isinstance(e, ir.Neg):
        return "-%s" % _expr(e.operand, _P_NEG), _P_NEG
    if isinstance(e, ir.ExtractField):
        return (
            "EXTRACT(%s FROM %s)" % (e.field.upper(), _expr(e.operand, _P_OR)),
            _P_ATOM,
        )
    if isinstance(e, ir.MinutesBetween):
        return (
            "MINUTES_BETWEEN(%s, %s)" % (_expr(e.start, _P_OR), _expr(e.end, _P_OR)),
            _P_ATOM,
        )
    if isinstance(e, ir.TruncTs):
        fn = "DATE_OF" if e.unit == "day" else "MONTH_OF"
        return "%s(%s)" % (fn, _expr(e.operand, _P_OR)), _P_ATOM
    if isinstance(e, ir.Exists):
        if e.from_in:
            return _in_form(e), _P_CMP
        body = "EXISTS (%s)" % _query(e.query)
        return ("NOT " + body, _P_NOT) if e.negated else (body, _P_ATOM)
    if isinstance(e, ir.Agg):
        if e.operand is None:
            return "COUNT(*)", _P_ATOM
        inner = _expr(e.operand, _P_OR)
        if e.distinct:
            inner = "DISTINCT " + inner
        return "%s(%s)" % (e.func.upper(), inner), _P_ATOM
    raise ValueError("cannot render %r" % (e,))


def _in_form(e: ir.Exists) -> str:
    """Resugar a desugared (NOT) IN membership test."""
    node = e.query
    if isinstance(node, ir.Project) and node.items is ir.STAR:
        node = node.child
    if not (isinstance(node, ir.Filter) and isinstance(node.child, ir.Derived)):
        raise ValueError("malformed IN node")
    sub = node.child.query
    elems = []
    for c in ir.split_conjuncts(node.predicate):
        if not (
            isinstance(c, ir.Cmp)
            and c.op == "="
            and isinstance(c.left, ir.Col)
            and c.left.qualifier == node.child.alias
        ):
            raise ValueError("malformed IN node")
        elems.append(_expr(c.right, _P_ADD))
    lhs = elems[0] if len(elems) == 1 else "(%s)" % ", ".join(elems)
    op = "NOT IN" if e.negated else "IN"
    return "%s %s (%s)" % (lhs, op, _query(sub))


def _lit(e: ir.Lit) -> str:
    if e.value is None:
        return "NULL"
    if e.kind == "bool":
        return "TRUE" if e.value else "FALSE"
    if e.kind == "text":
        return "'%s'" % str(e.value).replace("'", "''")
    if e.kind == "timestamp":
        assert isinstance(e.value, Ts)
        return "TIMESTAMP '%s'" % e.value.isoformat()
    return str(e.value)
