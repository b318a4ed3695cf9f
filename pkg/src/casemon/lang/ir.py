"""Query intermediate representation.

Two node families: scalar expressions (predicates, projections, keys) and
relational operators.  All nodes are frozen dataclasses so trees compare
and hash structurally; the engine relies on that for sharing identical
subplans, and the pretty-printer round-trip law is stated as structural
equality of typechecked trees.

Column references carry a binding after typechecking: ``(levels_up, index)``
into the stack of enclosing row scopes, plus the resolved kind.  Before
typechecking the binding is None.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

# ---------------------------------------------------------------- scalars


@dataclass(frozen=True)
class Lit:
    value: object  # None, bool, int, Decimal, str, or Ts
    kind: str


@dataclass(frozen=True)
class Col:
    qualifier: Optional[str]
    name: str
    # filled by typecheck: (levels_up, flat_index, kind)
    binding: Optional[Tuple[int, int, str]] = None

    def bound(self) -> Tuple[int, int, str]:
        if self.binding is None:
            raise ValueError("column %s not resolved" % self.display())
        return self.binding

    def display(self) -> str:
        return "%s.%s" % (self.qualifier, self.name) if self.qualifier else self.name


@dataclass(frozen=True)
class Arith:
    op: str  # + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str  # = <> < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class ExtractField:
    field: str  # year month day hour minute
    operand: "Expr"


@dataclass(frozen=True)
class MinutesBetween:
    start: "Expr"
    end: "Expr"


@dataclass(frozen=True)
class TruncTs:
    """Truncate a timestamp to a calendar boundary (DATE_OF / MONTH_OF)."""

    unit: str  # day | month
    operand: "Expr"


@dataclass(frozen=True)
class Exists:
    """EXISTS / NOT EXISTS over a subquery.  Removed by decorrelation.

    from_in records that the node was desugared from (NOT) IN, which the
    pretty-printer resugars and feature detection treats as membership
    rather than an existence check.
    """

    query: "Rel"
    negated: bool
    from_in: bool = False


@dataclass(frozen=True)
class Agg:
    """Aggregate call; only valid inside GroupAgg nodes."""

    func: str  # count sum avg min max
    operand: Optional["Expr"]  # None means COUNT(*)
    distinct: bool = False


Expr = Union[
    Lit, Col, Arith, Neg, Cmp, And, Or, Not, ExtractField, MinutesBetween,
    TruncTs, Exists,
]

# ------------------------------------------------------------- relational

STAR = "*"  # sentinel for SELECT *; Project keeps it through typechecking


@dataclass(frozen=True)
class Scan:
    relation: str
    alias: Optional[str] = None

    def qualifier(self) -> str:
        return self.alias or self.relation


@dataclass(frozen=True)
class Derived:
    """Subquery in FROM; also what view references expand to."""

    query: "Rel"
    alias: str


@dataclass(frozen=True)
class Join:
    left: "Rel"
    right: "Rel"
    on: Optional[Expr]  # None for comma-style cross join


@dataclass(frozen=True)
class Filter:
    child: "Rel"
    predicate: Expr


@dataclass(frozen=True)
class Project:
    child: "Rel"
    # STAR, or ((name, expr), ...)
    items: object


@dataclass(frozen=True)
class GroupAgg:
    child: "Rel"
    groups: Tuple[Tuple[str, Expr], ...]
    aggs: Tuple[Tuple[str, Agg], ...]


@dataclass(frozen=True)
class Distinct:
    child: "Rel"


@dataclass(frozen=True)
class UnionAll:
    left: "Rel"
    right: "Rel"


@dataclass(frozen=True)
class SemiJoin:
    """Probe rows that have at least one key match on the build side.

    Produced by decorrelation only; ``keys`` pairs (probe_expr, build_expr)
    evaluated over the respective rows.  Empty keys means plain
    nonemptiness of the build side.
    """

    probe: "Rel"
    build: "Rel"
    keys: Tuple[Tuple[Expr, Expr], ...]


@dataclass(frozen=True)
class AntiJoin:
    probe: "Rel"
    build: "Rel"
    keys: Tuple[Tuple[Expr, Expr], ...]


Rel = Union[
    Scan, Derived, Join, Filter, Project, GroupAgg, Distinct, UnionAll,
    SemiJoin, AntiJoin,
]

_REL_TYPES = (
    Scan, Derived, Join, Filter, Project, GroupAgg, Distinct, UnionAll,
    SemiJoin, AntiJoin,
)


def is_rel(node: object) -> bool:
    return isinstance(node, _REL_TYPES)


def rel_children(node: Rel) -> Tuple[Rel, ...]:
    if isinstance(node, Scan):
        return ()
    if isinstance(node, Derived):
        return (node.query,)
    if isinstance(node, (Join, UnionAll)):
        return (node.left, node.right)
    if isinstance(node, (SemiJoin, AntiJoin)):
        return (node.probe, node.build)
    return (node.child,)


def expr_children(e: Expr) -> Tuple[Expr, ...]:
    if isinstance(e, (Lit, Col)):
        return ()
    if isinstance(e, (Arith, Cmp, And, Or)):
        return (e.left, e.right)
    if isinstance(e, (Neg, Not)):
        return (e.operand,)
    if isinstance(e, ExtractField):
        return (e.operand,)
    if isinstance(e, MinutesBetween):
        return (e.start, e.end)
    if isinstance(e, TruncTs):
        return (e.operand,)
    if isinstance(e, Exists):
        return ()
    if isinstance(e, Agg):
        return (e.operand,) if e.operand is not None else ()
    raise TypeError("not an expression: %r" % (e,))


def split_conjuncts(e: Expr) -> list:
    """Flatten a predicate along top-level ANDs."""
    if isinstance(e, And):
        return split_conjuncts(e.left) + split_conjuncts(e.right)
    return [e]


def conjoin(parts) -> Optional[Expr]:
    out = None
    for p in parts:
        out = p if out is None else And(out, p)
    return out


def walk_exprs(e: Expr):
    """Yield e and scalar descendants; does not enter Exists subqueries."""
    yield e
    for c in expr_children(e):
        yield from walk_exprs(c)


def contains_exists(e: Expr) -> bool:
    return any(isinstance(x, Exists) for x in walk_exprs(e))


def min_free_level(e: Expr) -> Optional[int]:
    """Smallest levels_up among column refs (ignoring Exists bodies).

    Returns None when the expression has no column refs at all.
    """
    best = None
    for x in walk_exprs(e):
        if isinstance(x, Col) and x.binding is not None:
            lv = x.binding[0]
            best = lv if best is None or lv < best else best
    return best


def shift_levels(e: Expr, delta: int) -> Expr:
    """Rebind every column ref by delta levels (no Exists inside, by contract)."""
    if isinstance(e, Col):
        lv, idx, kind = e.bound()
        return Col(e.qualifier, e.name, (lv + delta, idx, kind))
    if isinstance(e, Lit):
        return e
    if isinstance(e, Arith):
        return Arith(e.op, shift_levels(e.left, delta), shift_levels(e.right, delta))
    if isinstance(e, Neg):
        return Neg(shift_levels(e.operand, delta))
    if isinstance(e, Cmp):
        return Cmp(e.op, shift_levels(e.left, delta), shift_levels(e.right, delta))
    if isinstance(e, And):
        return And(shift_levels(e.left, delta), shift_levels(e.right, delta))
    if isinstance(e, Or):
        return Or(shift_levels(e.left, delta), shift_levels(e.right, delta))
    if isinstance(e, Not):
        return Not(shift_levels(e.operand, delta))
    if isinstance(e, ExtractField):
        return ExtractField(e.field, shift_levels(e.operand, delta))
    if isinstance(e, MinutesBetween):
        return MinutesBetween(shift_levels(e.start, delta), shift_levels(e.end, delta))
    if isinstance(e, TruncTs):
        return TruncTs(e.unit, shift_levels(e.operand, delta))
    raise TypeError("cannot shift %r" % (e,))
