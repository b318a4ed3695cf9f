"""Name resolution and kind checking.

Rebuilds the tree with every column reference bound to ``(levels_up,
index, kind)``: levels_up counts enclosing row scopes outward from the
expression (0 = the row of the operator the expression sits on), index is
the position in that row.  View references are expanded here into derived
tables, so downstream passes only ever see base relations.

Scope entries keep their table qualifier so that ``e.case_id`` and
``f.case_id`` coexist after a self-join; an unqualified name that matches
more than one entry in a scope is an error rather than a guess.
"""
from __future__ import annotations

from difflib import get_close_matches
from typing import Dict, List, Optional, Tuple

from ..relational import Schema
from ..values import ANY
from . import ir
from .catalog import Catalog

# (qualifier, name, kind)
ScopeEntry = Tuple[Optional[str], str, str]
Entries = Tuple[ScopeEntry, ...]

NUMERIC = ("int", "decimal")
ORDERABLE = ("int", "decimal", "text", "timestamp")


class TypeError_(Exception):
    pass


class Checked:
    """Typechecked tree plus per-node output row descriptions."""

    def __init__(self, root: ir.Rel, entries: Dict[ir.Rel, Entries]):
        self.root = root
        self.entries = entries

    def row(self, node: Optional[ir.Rel] = None) -> Entries:
        return self.entries[self.root if node is None else node]

    def schema(self, node: Optional[ir.Rel] = None) -> Schema:
        return Schema(tuple((n, k) for _, n, k in self.row(node)))


def typecheck(rel: ir.Rel, catalog: Catalog) -> Checked:
    checker = _Checker(catalog)
    root, _ = checker.rel(rel, [])
    return Checked(root, checker.entries)


class _Checker:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.entries: Dict[ir.Rel, Entries] = {}
        self.expanding: set = set()

    # ---------------------------------------------------------- relational

    def rel(self, node: ir.Rel, stack: List[Entries]) -> Tuple[ir.Rel, Entries]:
        node2, ents = self._rel(node, stack)
        self.entries[node2] = ents
        return node2, ents

    def _rel(self, node: ir.Rel, stack: List[Entries]) -> Tuple[ir.Rel, Entries]:
        if isinstance(node, ir.Scan):
            return self.scan(node, stack)
        if isinstance(node, ir.Derived):
            sub, ents = self.rel(node.query, stack)
            requalified = tuple((node.alias, n, k) for _, n, k in ents)
            return ir.Derived(sub, node.alias), requalified
        if isinstance(node, ir.Join):
            left, le = self.rel(node.left, stack)
            right, re_ = self.rel(node.right, stack)
            row = le + re_
            on = None
            if node.on is not None:
                on = self.boolish(node.on, stack + [row], "JOIN condition")
            return ir.Join(left, right, on), row
        if isinstance(node, ir.Filter):
            child, ce = self.rel(node.child, stack)
            pred = self.boolish(node.predicate, stack + [ce], "filter predicate")
            return ir.Filter(child, pred), ce
        if isinstance(node, ir.Project):
            child, ce = self.rel(node.child, stack)
            if node.items is ir.STAR:
                return ir.Project(child, ir.STAR), ce
            inner = stack + [ce]
            items = []
            ents = []
            for name, e in node.items:
                e2, kind = self.expr(e, inner)
                items.append((name, e2))
                ents.append((None, name, kind))
            return ir.Project(child, tuple(items)), tuple(ents)
        if isinstance(node, ir.GroupAgg):
            child, ce = self.rel(node.child, stack)
            inner = stack + [ce]
            groups = []
            ents = []
            for name, g in node.groups:
                g2, kind = self.expr(g, inner)
                qual = g.qualifier if isinstance(g, ir.Col) else None
                groups.append((name, g2))
                ents.append((qual, name, kind))
            aggs = []
            for name, a in node.aggs:
                a2, kind = self.agg(a, inner)
                aggs.append((name, a2))
                ents.append((None, name, kind))
            return ir.GroupAgg(child, tuple(groups), tuple(aggs)), tuple(ents)
        if isinstance(node, ir.Distinct):
            child, ce = self.rel(node.child, stack)
            return ir.Distinct(child), ce
        if isinstance(node, ir.UnionAll):
            left, le = self.rel(node.left, stack)
            right, re_ = self.rel(node.right, stack)
            if len(le) != len(re_):
                raise TypeError_(
                    "UNION branches have %d and %d columns" % (len(le), len(re_))
                )
            ents = []
            for (_, n, lk), (_, rn, rk) in zip(le, re_):
                ents.append((None, n, self.union_kind(n, rn, lk, rk)))
            return ir.UnionAll(left, right), tuple(ents)
        raise TypeError_("unexpected operator %s in source tree" % type(node).__name__)

    def scan(self, node: ir.Scan, stack: List[Entries]) -> Tuple[ir.Rel, Entries]:
        name = node.relation
        if name in self.catalog.views:
            if name in self.expanding:
                raise TypeError_("view %r refers to itself" % name)
            self.expanding.add(name)
            try:
                expanded = ir.Derived(self.catalog.views[name], node.alias or name)
                return self._rel(expanded, stack)
            finally:
                self.expanding.discard(name)
        if name not in self.catalog.relations:
            known = sorted(set(self.catalog.relations) | set(self.catalog.views))
            hint = get_close_matches(name, known, n=1)
            extra = "; did you mean %r" % hint[0] if hint else ""
            raise TypeError_("unknown table %r%s" % (name, extra))
        schema = self.catalog.relations[name]
        q = node.qualifier()
        return node, tuple((q, n, k) for n, k in schema.fields)

    def union_kind(self, ln: str, rn: str, lk: str, rk: str) -> str:
        if lk == rk:
            return lk
        if lk == "null":
            return rk
        if rk == "null":
            return lk
        if lk in NUMERIC and rk in NUMERIC:
            return "decimal"
        if ANY in (lk, rk):
            return ANY
        raise TypeError_(
            "UNION column %r is %s on one side and %s (%r) on the other" % (ln, lk, rk, rn)
        )

    # --------------------------------------------------------- expressions

    def boolish(self, e: ir.Expr, stack: List[Entries], what: str) -> ir.Expr:
        e2, kind = self.expr(e, stack)
        if kind not in ("bool", "null"):
            raise TypeError_("%s must be boolean, got %s" % (what, kind))
        return e2

    def expr(self, e: ir.Expr, stack: List[Entries]) -> Tuple[ir.Expr, str]:
        if isinstance(e, ir.Lit):
            return e, e.kind
        if isinstance(e, ir.Col):
            return self.col(e, stack)
        if isinstance(e, ir.Arith):
            left, lk = self.expr(e.left, stack)
            right, rk = self.expr(e.right, stack)
            for k in (lk, rk):
                if k not in NUMERIC and k != "null":
                    raise TypeError_("arithmetic on %s" % k)
            kind = "decimal" if (e.op == "/" or "decimal" in (lk, rk)) else "int"
            return ir.Arith(e.op, left, right), kind
        if isinstance(e, ir.Neg):
            operand, k = self.expr(e.operand, stack)
            if k not in NUMERIC and k != "null":
                raise TypeError_("arithmetic on %s" % k)
            return ir.Neg(operand), "int" if k == "null" else k
        if isinstance(e, ir.Cmp):
            return self.cmp(e, stack)
        if isinstance(e, (ir.And, ir.Or)):
            ctor = ir.And if isinstance(e, ir.And) else ir.Or
            left = self.boolish(e.left, stack, "boolean operand")
            right = self.boolish(e.right, stack, "boolean operand")
            return ctor(left, right), "bool"
        if isinstance(e, ir.Not):
            return ir.Not(self.boolish(e.operand, stack, "NOT operand")), "bool"
        if isinstance(e, ir.ExtractField):
            operand, k = self.expr(e.operand, stack)
            if k not in ("timestamp", "null"):
                raise TypeError_("EXTRACT needs a timestamp, got %s" % k)
            return ir.ExtractField(e.field, operand), "int"
        if isinstance(e, ir.MinutesBetween):
            start, sk = self.expr(e.start, stack)
            end, ek = self.expr(e.end, stack)
            for k in (sk, ek):
                if k not in ("timestamp", "null"):
                    raise TypeError_("MINUTES_BETWEEN needs timestamps, got %s" % k)
            return ir.MinutesBetween(start, end), "decimal"
        if isinstance(e, ir.TruncTs):
            operand, k = self.expr(e.operand, stack)
            if k not in ("timestamp", "null"):
                raise TypeError_(
                    "%s needs a timestamp, got %s"
                    % ("DATE_OF" if e.unit == "day" else "MONTH_OF", k)
                )
            return ir.TruncTs(e.unit, operand), "timestamp"
        if isinstance(e, ir.Exists):
            sub, _ = self.rel(e.query, stack)
            return ir.Exists(sub, e.negated, e.from_in), "bool"
        if isinstance(e, ir.Agg):
            raise TypeError_("aggregate outside GROUP BY context")
        raise TypeError_("unexpected expression %r" % (e,))

    def cmp(self, e: ir.Cmp, stack: List[Entries]) -> Tuple[ir.Expr, str]:
        left, lk = self.expr(e.left, stack)
        right, rk = self.expr(e.right, stack)
        out = ir.Cmp(e.op, left, right)
        if "null" in (lk, rk):
            return out, "bool"
        if e.op in ("=", "<>"):
            ok = lk == rk or (lk in NUMERIC and rk in NUMERIC) or ANY in (lk, rk)
            if not ok:
                raise TypeError_("cannot compare %s with %s" % (lk, rk))
            return out, "bool"
        if ANY in (lk, rk):
            raise TypeError_(
                "ordering comparison on untyped attribute values; cast via equality instead"
            )
        ok = (lk in NUMERIC and rk in NUMERIC) or (lk == rk and lk in ORDERABLE)
        if not ok:
            raise TypeError_("cannot order %s against %s" % (lk, rk))
        return out, "bool"

    def agg(self, a: ir.Agg, stack: List[Entries]) -> Tuple[ir.Agg, str]:
        if a.operand is None:
            return a, "int"
        operand, k = self.expr(a.operand, stack)
        out = ir.Agg(a.func, operand, a.distinct)
        if a.func == "count":
            return out, "int"
        if a.func == "sum":
            if k not in NUMERIC:
                raise TypeError_("SUM over %s" % k)
            return out, k
        if a.func == "avg":
            if k not in NUMERIC:
                raise TypeError_("AVG over %s" % k)
            return out, "decimal"
        if a.func in ("min", "max"):
            if k not in ORDERABLE:
                raise TypeError_("%s over %s" % (a.func.upper(), k))
            return out, k
        raise TypeError_("unknown aggregate %r" % a.func)

    def col(self, e: ir.Col, stack: List[Entries]) -> Tuple[ir.Col, str]:
        for lv, entries in enumerate(reversed(stack)):
            hits = [
                (i, ent)
                for i, ent in enumerate(entries)
                if ent[1] == e.name and (e.qualifier is None or ent[0] == e.qualifier)
            ]
            if len(hits) > 1:
                forms = ", ".join(
                    "%s.%s" % (q, n) if q else n for _, (q, n, _) in hits
                )
                raise TypeError_("column %r is ambiguous (%s)" % (e.display(), forms))
            if hits:
                idx, (_, _, kind) = hits[0]
                return ir.Col(e.qualifier, e.name, (lv, idx, kind)), kind
        names = []
        for entries in stack:
            for q, n, _ in entries:
                names.append("%s.%s" % (q, n) if q else n)
                names.append(n)
        hint = get_close_matches(e.display(), sorted(set(names)), n=1)
        extra = "; did you mean %r" % hint[0] if hint else ""
        raise TypeError_("unknown column %r%s" % (e.display(), extra))
