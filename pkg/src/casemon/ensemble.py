"""Constraint ensembles: query groups that grade case compliance.

A constraint is a small family of queries over one database that agree on
a common row shape; each result row is a *case key*.  Post-mortem
constraints carry two members (``case``, ``viol``).  Monitored
constraints carry four (``case``, ``viol_perm``, ``viol_pending``,
``sat_pending``); permanently satisfied cases are never materialized --
they are whatever remains of ``case`` once the other members have
claimed their keys.

Constraints are written in a plain text format::

    # one delivery per order and day
    constraint unique-delivery mode monitor

    VIEW deliveries:
      SELECT e.case_id AS case_id, e.ts AS ts FROM Events e
      WHERE e.activity = 'deliver'

    CASE:
      SELECT d.case_id AS case_id FROM deliveries d

    VIOL_PERM:
      ...

``#`` starts a line comment.  ``VIEW name:`` blocks are local to the
file and visible to every block below them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional, Tuple

from .lang import (
    Catalog,
    ParseError,
    TypeError_,
    UnsupportedFeatureError,
    decorrelate,
    parse,
    typecheck,
)
from .lang import ir
from .lang.typecheck import Checked
from .relational import Schema

POSTMORTEM = "postmortem"
MONITOR = "monitor"

#: member-query names per mode, in classification priority order
MEMBERS = {
    POSTMORTEM: ("case", "viol"),
    MONITOR: ("case", "viol_perm", "viol_pending", "sat_pending"),
}

#: the feature vocabulary constraints are tagged with
FEATURE_TAGS = ("aggregation", "or", "existence", "negation", "double-negation")


class EnsembleError(ValueError):
    """Malformed or inconsistent constraint definition."""


# -- feature detection

def _node_exprs(node: ir.Rel):
    if isinstance(node, ir.Filter):
        yield node.predicate
    elif isinstance(node, ir.Join):
        if node.on is not None:
            yield node.on
    elif isinstance(node, ir.Project):
        if node.items is not ir.STAR:
            for _, e in node.items:
                yield e
    elif isinstance(node, ir.GroupAgg):
        for _, e in node.groups:
            yield e
        for _, a in node.aggs:
            yield a


def _walk_tree(node: ir.Rel):
    """Yield ("rel", n) / ("expr", e) pairs, descending into subqueries."""
    yield "rel", node
    for e in _node_exprs(node):
        yield from _walk_expr(e)
    for c in ir.rel_children(node):
        yield from _walk_tree(c)


def _walk_expr(e: ir.Expr):
    yield "expr", e
    if isinstance(e, ir.Exists):
        yield from _walk_tree(e.query)
    for c in ir.expr_children(e):
        yield from _walk_expr(c)


def _has_negated_exists(node: ir.Rel) -> bool:
    return any(
        kind == "expr" and isinstance(x, ir.Exists) and x.negated
        for kind, x in _walk_tree(node)
    )


def feature_tags(roots) -> FrozenSet[str]:
    """Classify the language features a set of query trees relies on.

    ``existence`` means a subquery written as EXISTS; membership tests
    (IN) do not count even though they lower to the same node.  Negation
    covers NOT, ``<>``, NOT EXISTS and NOT IN; double negation is a
    negated subquery nested inside another negated subquery.
    """
    tags = set()
    for root in roots:
        for kind, x in _walk_tree(root):
            if kind == "rel" and isinstance(x, ir.GroupAgg):
                tags.add("aggregation")
            if kind != "expr":
                continue
            if isinstance(x, ir.Or):
                tags.add("or")
            elif isinstance(x, ir.Not):
                tags.add("negation")
            elif isinstance(x, ir.Cmp) and x.op == "<>":
                tags.add("negation")
            elif isinstance(x, ir.Exists):
                if not x.from_in:
                    tags.add("existence")
                if x.negated:
                    tags.add("negation")
                    if _has_negated_exists(x.query):
                        tags.add("double-negation")
    return frozenset(tags)


# -- the ensemble itself

def _merge_kind(name: str, a: str, b: str) -> str:
    if a == b:
        return a
    if a == "null":
        return b
    if b == "null":
        return a
    if {a, b} <= {"int", "decimal"}:
        return "decimal"
    raise EnsembleError(
        "column %r has kind %s in one member query and %s in another" % (name, a, b)
    )


@dataclass(frozen=True)
class ConstraintEnsemble:
    name: str
    mode: str
    #: typechecked members as written, keyed by member-query name
    members: Dict[str, Checked]
    #: decorrelated, directly executable trees
    roots: Dict[str, ir.Rel]
    #: the agreed case-key shape
    schema: Schema
    tags: FrozenSet[str]

    @property
    def member_names(self) -> Tuple[str, ...]:
        return MEMBERS[self.mode]

    @classmethod
    def build(
        cls,
        name: str,
        mode: str,
        sources: Dict[str, str],
        catalog: Optional[Catalog] = None,
    ) -> "ConstraintEnsemble":
        """Parse, typecheck and decorrelate a member-query mapping."""
        if catalog is None:
            catalog = Catalog.default()
        if mode not in MEMBERS:
            raise EnsembleError("unknown mode %r (postmortem or monitor)" % mode)
        if not re.fullmatch(r"[A-Za-z0-9][A-Za-z0-9_.-]*", name or ""):
            raise EnsembleError("bad constraint name %r" % name)
        expected = MEMBERS[mode]
        missing = [m for m in expected if m not in sources]
        extra = [m for m in sources if m not in expected]
        if missing or extra:
            raise EnsembleError(
                "constraint %r (mode %s): missing %s, unexpected %s"
                % (name, mode, missing or "none", extra or "none")
            )

        members: Dict[str, Checked] = {}
        roots: Dict[str, ir.Rel] = {}
        for member in expected:
            try:
                checked = typecheck(parse(sources[member]), catalog)
            except (ParseError, TypeError_) as err:
                raise EnsembleError(
                    "constraint %r, %s query: %s" % (name, member, err)
                ) from err
            members[member] = checked
            try:
                roots[member] = decorrelate(checked.root)
            except UnsupportedFeatureError as err:
                raise UnsupportedFeatureError(
                    "constraint %r, %s query: %s" % (name, member, err)
                ) from err

        schema = _agree_schema(name, members)
        tags = feature_tags([c.root for c in members.values()])
        return cls(name, mode, members, roots, schema, tags)


def _agree_schema(name: str, members: Dict[str, Checked]) -> Schema:
    base_member = "case"
    names = members[base_member].schema().names
    kinds = list(members[base_member].schema().kinds)
    for member, checked in members.items():
        sch = checked.schema()
        if sch.names != names:
            raise EnsembleError(
                "constraint %r: %s query returns columns %s, but the case "
                "query returns %s" % (name, member, list(sch.names), list(names))
            )
        for i, k in enumerate(sch.kinds):
            kinds[i] = _merge_kind(names[i], kinds[i], k)
    return Schema(tuple(zip(names, kinds)))


# -- the file format

_HEADER = re.compile(r"^constraint\s+(\S+)\s+mode\s+(\S+)\s*$", re.IGNORECASE)
_LABEL = re.compile(r"^(CASE|VIOL|VIOL_PERM|VIOL_PENDING|SAT_PENDING):\s*$")
_VIEW = re.compile(r"^VIEW\s+([A-Za-z_][A-Za-z0-9_]*):\s*$")

_LABEL_MEMBER = {
    "CASE": "case",
    "VIOL": "viol",
    "VIOL_PERM": "viol_perm",
    "VIOL_PENDING": "viol_pending",
    "SAT_PENDING": "sat_pending",
}


def parse_constraint_text(
    text: str, catalog: Optional[Catalog] = None, origin: str = "<constraint>"
) -> ConstraintEnsemble:
    """Read one constraint definition from its text form."""
    catalog = Catalog.default() if catalog is None else catalog.copy()
    header: Optional[Tuple[str, str]] = None
    sources: Dict[str, str] = {}
    # (member name | ("view", view name), first line no, accumulated lines)
    block = None

    def flush():
        nonlocal block
        if block is None:
            return
        target, lineno, lines = block
        block = None
        sql = "\n".join(lines).strip()
        if not sql:
            raise EnsembleError(
                "%s:%d: empty %s block" % (origin, lineno, _describe(target))
            )
        if isinstance(target, tuple):
            try:
                catalog.add_view(target[1], sql)
            except ParseError as err:
                raise EnsembleError(
                    "%s: view %s: %s" % (origin, target[1], err)
                ) from err
        else:
            sources[target] = sql

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _HEADER.match(line)
        if m:
            if header is not None:
                raise EnsembleError("%s:%d: second header line" % (origin, lineno))
            header = (m.group(1), m.group(2).lower())
            continue
        if header is None:
            raise EnsembleError(
                "%s:%d: expected 'constraint <name> mode <postmortem|monitor>' "
                "before %r" % (origin, lineno, line)
            )
        m = _LABEL.match(line)
        if m:
            flush()
            member = _LABEL_MEMBER[m.group(1)]
            if member in sources:
                raise EnsembleError(
                    "%s:%d: duplicate %s block" % (origin, lineno, m.group(1))
                )
            block = (member, lineno, [])
            continue
        m = _VIEW.match(line)
        if m:
            flush()
            block = (("view", m.group(1)), lineno, [])
            continue
        if block is None:
            raise EnsembleError(
                "%s:%d: expected a block label, got %r" % (origin, lineno, line)
            )
        block[2].append(raw)
    flush()

    if header is None:
        raise EnsembleError("%s: no constraint header found" % origin)
    return ConstraintEnsemble.build(header[0], header[1], sources, catalog)


def _describe(target) -> str:
    return "VIEW %s" % target[1] if isinstance(target, tuple) else target.upper()


def load_constraint_file(path, catalog: Optional[Catalog] = None) -> ConstraintEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_constraint_text(text, catalog, origin=str(path))
