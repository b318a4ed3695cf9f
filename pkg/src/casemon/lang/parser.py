"""Parser for the query dialect.

Hand-written tokenizer + recursive descent.  The parser does more than
recognize: it lowers each SELECT block into canonical IR right away --
WHERE into Filter, GROUP BY/aggregates into GroupAgg (aggregate calls are
pulled out of select items and HAVING and replaced by references to named
aggregate outputs), IN/NOT IN into EXISTS/NOT EXISTS over a wrapped
derived table.  The pretty-printer inverts exactly this lowering, which is
what makes the round-trip law hold.

Identifiers are case-sensitive; keywords are not.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from difflib import get_close_matches
from typing import List, Optional, Tuple

from ..values import Ts, ValueError_
from . import ir

KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "UNION",
    "ALL", "AS", "JOIN", "ON", "EXISTS", "NOT", "IN", "AND", "OR", "BETWEEN",
    "TRUE", "FALSE", "NULL", "EXTRACT", "TIMESTAMP",
}

FUNCS = {"COUNT", "SUM", "AVG", "MIN", "MAX", "MINUTES_BETWEEN", "DATE_OF", "MONTH_OF"}

EXTRACT_FIELDS = {"year", "month", "day", "hour", "minute"}

CMP_OPS = {"=", "<>", "<", "<=", ">", ">="}

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>--[^\n]*)
      | (?P<number>\d+(?:\.\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<string>'(?:[^']|'')*')
      | (?P<op><>|<=|>=|[=<>+\-*/(),.])
    """,
    re.VERBOSE,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__("line %d, col %d: %s" % (line, col, message))
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # kw ident num str op eof
    value: object
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    toks: List[Token] = []
    line, col, pos = 1, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError("unexpected character %r" % text[pos], line, col)
        group = m.lastgroup
        raw = m.group()
        if group == "ws" or group == "comment":
            pass
        elif group == "number":
            val = Decimal(raw) if "." in raw else int(raw)
            toks.append(Token("num", val, line, col))
        elif group == "ident":
            if raw.upper() in KEYWORDS:
                toks.append(Token("kw", raw.upper(), line, col))
            else:
                toks.append(Token("ident", raw, line, col))
        elif group == "string":
            toks.append(Token("str", raw[1:-1].replace("''", "'"), line, col))
        else:
            toks.append(Token("op", raw, line, col))
        # advance position tracking
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    toks.append(Token("eof", None, line, col))
    return toks


def parse(text: str) -> ir.Rel:
    """Parse a full query; raises ParseError with line/col on bad input."""
    p = _Parser(tokenize(text))
    q = p.parse_query()
    p.expect_eof()
    return q


class _Parser:
    def __init__(self, toks: List[Token]):
        self.toks = toks
        self.pos = 0

    # ------------------------------------------------------------ helpers

    def peek(self, ahead: int = 0) -> Token:
        i = min(self.pos + ahead, len(self.toks) - 1)
        return self.toks[i]

    def at(self, kind: str, value=None) -> bool:
        t = self.peek()
        return t.kind == kind and (value is None or t.value == value)

    def at_kw(self, *names: str) -> bool:
        t = self.peek()
        return t.kind == "kw" and t.value in names

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def accept(self, kind: str, value=None) -> Optional[Token]:
        if self.at(kind, value):
            return self.advance()
        return None

    def expect(self, kind: str, value=None, what: str = "") -> Token:
        if self.at(kind, value):
            return self.advance()
        t = self.peek()
        want = what or (value if value is not None else kind)
        raise ParseError("expected %s, found %s" % (want, _describe(t)), t.line, t.col)

    def expect_eof(self):
        t = self.peek()
        if t.kind != "eof":
            raise ParseError("unexpected trailing input: %s" % _describe(t), t.line, t.col)

    def error(self, message: str) -> ParseError:
        t = self.peek()
        return ParseError(message, t.line, t.col)

    # ------------------------------------------------------------ queries

    def parse_query(self) -> ir.Rel:
        left = self.parse_block()
        while self.at_kw("UNION"):
            self.advance()
            keep_all = self.accept("kw", "ALL") is not None
            right = self.parse_block()
            left = ir.UnionAll(left, right)
            if not keep_all:
                left = ir.Distinct(left)
        return left

    def parse_block(self) -> ir.Rel:
        if self.accept("op", "("):
            q = self.parse_query()
            self.expect("op", ")")
            return q
        self.expect("kw", "SELECT")
        distinct = self.accept("kw", "DISTINCT") is not None
        items = self.parse_select_items()
        self.expect("kw", "FROM")
        from_tree = self.parse_from_list()
        where = None
        if self.accept("kw", "WHERE"):
            where = self.parse_pred()
        groups: List[ir.Expr] = []
        if self.at_kw("GROUP"):
            self.advance()
            self.expect("kw", "BY")
            groups.append(self.parse_pred())
            while self.accept("op", ","):
                groups.append(self.parse_pred())
        having = None
        if self.accept("kw", "HAVING"):
            having = self.parse_pred()
        return self.lower_block(distinct, items, from_tree, where, tuple(groups), having)

    def parse_select_items(self):
        if self.accept("op", "*"):
            return ir.STAR
        items: List[Tuple[Optional[str], ir.Expr]] = []
        while True:
            expr = self.parse_pred()
            alias = None
            if self.accept("kw", "AS"):
                alias = self.expect("ident", what="column alias").value
            items.append((alias, expr))
            if not self.accept("op", ","):
                break
        return items

    def parse_from_list(self) -> ir.Rel:
        tree = self.parse_from_item()
        while True:
            if self.accept("op", ","):
                tree = ir.Join(tree, self.parse_from_item(), None)
            elif self.at_kw("JOIN"):
                self.advance()
                right = self.parse_from_item()
                self.expect("kw", "ON")
                tree = ir.Join(tree, right, self.parse_pred())
            else:
                return tree

    def parse_from_item(self) -> ir.Rel:
        if self.accept("op", "("):
            q = self.parse_query()
            self.expect("op", ")")
            self.accept("kw", "AS")
            alias = self.expect("ident", what="derived table alias").value
            return ir.Derived(q, alias)
        name = self.expect("ident", what="table name").value
        alias = None
        if self.accept("kw", "AS"):
            alias = self.expect("ident", what="table alias").value
        elif self.at("ident"):
            alias = self.advance().value
        return ir.Scan(name, alias)

    # -------------------------------------------------------- expressions

    def parse_pred(self) -> ir.Expr:
        left = self.parse_and()
        while self.at_kw("OR"):
            self.advance()
            left = ir.Or(left, self.parse_and())
        return left

    def parse_and(self) -> ir.Expr:
        left = self.parse_not()
        while self.at_kw("AND"):
            self.advance()
            left = ir.And(left, self.parse_not())
        return left

    def parse_not(self) -> ir.Expr:
        if self.at_kw("NOT"):
            self.advance()
            operand = self.parse_not()
            # canonical form: negation of EXISTS lives on the Exists node
            if isinstance(operand, ir.Exists):
                return ir.Exists(operand.query, not operand.negated, operand.from_in)
            return ir.Not(operand)
        return self.parse_cmp()

    def parse_cmp(self) -> ir.Expr:
        tuple_in = self.try_tuple_in()
        if tuple_in is not None:
            return tuple_in
        left = self.parse_addsub()
        t = self.peek()
        if t.kind == "op" and t.value in CMP_OPS:
            self.advance()
            return ir.Cmp(t.value, left, self.parse_addsub())
        negated = False
        if self.at_kw("NOT"):
            if not (self.peek(1).kind == "kw" and self.peek(1).value in ("BETWEEN", "IN")):
                raise self.error("expected BETWEEN or IN after NOT")
            self.advance()
            negated = True
        if self.at_kw("BETWEEN"):
            self.advance()
            lo = self.parse_addsub()
            self.expect("kw", "AND")
            hi = self.parse_addsub()
            rng = ir.And(ir.Cmp(">=", left, lo), ir.Cmp("<=", left, hi))
            return ir.Not(rng) if negated else rng
        if self.at_kw("IN"):
            self.advance()
            return self.desugar_in((left,), negated)
        if negated:
            raise self.error("expected BETWEEN or IN after NOT")
        return left

    def try_tuple_in(self) -> Optional[ir.Expr]:
        """(a, b) [NOT] IN (subquery); backtracks when it is not that."""
        if not self.at("op", "("):
            return None
        saved = self.pos
        try:
            self.advance()
            elems = [self.parse_addsub()]
            if not self.at("op", ","):
                raise self.error("not a tuple")
            while self.accept("op", ","):
                elems.append(self.parse_addsub())
            self.expect("op", ")")
            negated = False
            if self.at_kw("NOT"):
                self.advance()
                negated = True
            self.expect("kw", "IN")
        except ParseError:
            self.pos = saved
            return None
        return self.desugar_in(tuple(elems), negated)

    def desugar_in(self, elems: Tuple[ir.Expr, ...], negated: bool) -> ir.Expr:
        t = self.expect("op", "(")
        sub = self.parse_query()
        self.expect("op", ")")
        names = _output_names(sub)
        if names is ir.STAR:
            raise ParseError("IN subquery must list its columns explicitly", t.line, t.col)
        if len(names) != len(elems):
            raise ParseError(
                "IN compares %d value(s) against a subquery with %d column(s)"
                % (len(elems), len(names)),
                t.line,
                t.col,
            )
        eqs = [ir.Cmp("=", ir.Col("_q", nm), el) for nm, el in zip(names, elems)]
        body = ir.Project(ir.Filter(ir.Derived(sub, "_q"), ir.conjoin(eqs)), ir.STAR)
        return ir.Exists(body, negated, from_in=True)

    def parse_addsub(self) -> ir.Expr:
        left = self.parse_muldiv()
        while self.at("op", "+") or self.at("op", "-"):
            op = self.advance().value
            left = ir.Arith(op, left, self.parse_muldiv())
        return left

    def parse_muldiv(self) -> ir.Expr:
        left = self.parse_unary()
        while self.at("op", "*") or self.at("op", "/"):
            op = self.advance().value
            left = ir.Arith(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> ir.Expr:
        if self.accept("op", "-"):
            return ir.Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> ir.Expr:
        t = self.peek()
        if t.kind == "num":
            self.advance()
            kind = "int" if isinstance(t.value, int) else "decimal"
            return ir.Lit(t.value, kind)
        if t.kind == "str":
            self.advance()
            return ir.Lit(t.value, "text")
        if t.kind == "kw":
            if t.value in ("TRUE", "FALSE"):
                self.advance()
                return ir.Lit(t.value == "TRUE", "bool")
            if t.value == "NULL":
                self.advance()
                return ir.Lit(None, "null")
            if t.value == "TIMESTAMP":
                self.advance()
                s = self.expect("str", what="timestamp literal")
                try:
                    return ir.Lit(Ts.parse(s.value), "timestamp")
                except ValueError_ as exc:
                    raise ParseError(str(exc), s.line, s.col)
            if t.value == "EXISTS":
                self.advance()
                self.expect("op", "(")
                q = self.parse_query()
                self.expect("op", ")")
                return ir.Exists(q, False)
            if t.value == "EXTRACT":
                self.advance()
                self.expect("op", "(")
                f = self.expect("ident", what="field name (YEAR, MONTH, ...)")
                field = str(f.value).lower()
                if field not in EXTRACT_FIELDS:
                    raise ParseError(
                        "unknown EXTRACT field %r; one of %s"
                        % (f.value, ", ".join(sorted(EXTRACT_FIELDS))),
                        f.line,
                        f.col,
                    )
                self.expect("kw", "FROM")
                operand = self.parse_pred()
                self.expect("op", ")")
                return ir.ExtractField(field, operand)
            raise ParseError("unexpected keyword %s" % t.value, t.line, t.col)
        if t.kind == "op" and t.value == "(":
            self.advance()
            if self.at_kw("SELECT"):
                raise ParseError(
                    "subqueries are only allowed in FROM, EXISTS, and IN", t.line, t.col
                )
            e = self.parse_pred()
            self.expect("op", ")")
            return e
        if t.kind == "ident":
            if self.peek(1).kind == "op" and self.peek(1).value == "(":
                return self.parse_call()
            self.advance()
            if self.accept("op", "."):
                col = self.expect("ident", what="column name")
                return ir.Col(t.value, col.value)
            return ir.Col(None, t.value)
        raise ParseError("expected an expression, found %s" % _describe(t), t.line, t.col)

    def parse_call(self) -> ir.Expr:
        name = self.advance()
        fn = str(name.value).upper()
        if fn not in FUNCS:
            hint = get_close_matches(fn, sorted(FUNCS), n=1)
            extra = "; did you mean %s" % hint[0] if hint else ""
            raise ParseError("unknown function %r%s" % (name.value, extra), name.line, name.col)
        self.expect("op", "(")
        if fn == "MINUTES_BETWEEN":
            a = self.parse_pred()
            self.expect("op", ",")
            b = self.parse_pred()
            self.expect("op", ")")
            return ir.MinutesBetween(a, b)
        if fn in ("DATE_OF", "MONTH_OF"):
            a = self.parse_pred()
            self.expect("op", ")")
            return ir.TruncTs("day" if fn == "DATE_OF" else "month", a)
        if fn == "COUNT" and self.accept("op", "*"):
            self.expect("op", ")")
            return ir.Agg("count", None, False)
        distinct = False
        if self.at_kw("DISTINCT"):
            if fn != "COUNT":
                raise self.error("DISTINCT is only supported inside COUNT")
            self.advance()
            distinct = True
        operand = self.parse_pred()
        self.expect("op", ")")
        return ir.Agg(fn.lower(), operand, distinct)

    # ----------------------------------------------------------- lowering

    def lower_block(self, distinct, items, from_tree, where, group_exprs, having) -> ir.Rel:
        base = from_tree
        if where is not None:
            _forbid_aggs(where, "WHERE")
            base = ir.Filter(base, where)
        for g in group_exprs:
            _forbid_aggs(g, "GROUP BY")

        item_exprs = [] if items is ir.STAR else [e for _, e in items]
        has_aggs = any(_has_agg(e) for e in item_exprs)
        if having is not None:
            has_aggs = has_aggs or _has_agg(having)

        if not group_exprs and not has_aggs:
            if having is not None:
                raise self.error("HAVING requires GROUP BY or aggregates")
            node = ir.Project(base, self.name_items(items))
            return ir.Distinct(node) if distinct else node

        if items is ir.STAR:
            raise self.error("SELECT * cannot be combined with GROUP BY or aggregates")

        # aggregate names: a whole-item aggregate takes its alias, first one wins
        agg_names: dict = {}
        order: List[ir.Agg] = []

        def note(agg: ir.Agg, alias: Optional[str]):
            if agg.operand is not None and _has_agg(agg.operand):
                raise self.error("aggregates cannot be nested")
            if agg not in agg_names:
                agg_names[agg] = alias
                order.append(agg)

        for alias, expr in items:
            if isinstance(expr, ir.Agg):
                note(expr, alias)
        for expr in item_exprs + ([having] if having is not None else []):
            for sub in ir.walk_exprs(expr):
                if isinstance(sub, ir.Agg):
                    note(sub, None)

        taken = set()
        group_names: List[str] = []
        for i, g in enumerate(group_exprs):
            name = None
            for alias, expr in items:
                if alias is not None and expr == g:
                    name = alias
                    break
            if name is None and isinstance(g, ir.Col):
                name = g.name
            if name is None:
                name = "_g%d" % i
            group_names.append(name)
            taken.add(name)
        final_aggs: List[Tuple[str, ir.Agg]] = []
        for i, agg in enumerate(order):
            name = agg_names[agg] or "_a%d" % i
            if name in taken:
                raise self.error("duplicate output column %r" % name)
            taken.add(name)
            final_aggs.append((name, agg))
        agg_ref = {agg: nm for nm, agg in final_aggs}
        composite = {
            g: nm for g, nm in zip(group_exprs, group_names) if not isinstance(g, ir.Col)
        }

        def subst(e: ir.Expr) -> ir.Expr:
            if isinstance(e, ir.Agg):
                return ir.Col(None, agg_ref[e])
            if e in composite:
                return ir.Col(None, composite[e])
            if isinstance(e, (ir.Lit, ir.Col, ir.Exists)):
                return e
            if isinstance(e, ir.Arith):
                return ir.Arith(e.op, subst(e.left), subst(e.right))
            if isinstance(e, ir.Neg):
                return ir.Neg(subst(e.operand))
            if isinstance(e, ir.Cmp):
                return ir.Cmp(e.op, subst(e.left), subst(e.right))
            if isinstance(e, ir.And):
                return ir.And(subst(e.left), subst(e.right))
            if isinstance(e, ir.Or):
                return ir.Or(subst(e.left), subst(e.right))
            if isinstance(e, ir.Not):
                return ir.Not(subst(e.operand))
            if isinstance(e, ir.ExtractField):
                return ir.ExtractField(e.field, subst(e.operand))
            if isinstance(e, ir.MinutesBetween):
                return ir.MinutesBetween(subst(e.start), subst(e.end))
            if isinstance(e, ir.TruncTs):
                return ir.TruncTs(e.unit, subst(e.operand))
            raise self.error("unsupported expression in grouped query")

        node: ir.Rel = ir.GroupAgg(
            base, tuple(zip(group_names, group_exprs)), tuple(final_aggs)
        )
        if having is not None:
            node = ir.Filter(node, subst(having))
        named = self.name_items([(alias, subst(e)) for alias, e in items])
        node = ir.Project(node, named)
        return ir.Distinct(node) if distinct else node

    def name_items(self, items):
        if items is ir.STAR:
            return ir.STAR
        out: List[Tuple[str, ir.Expr]] = []
        seen = set()
        for i, (alias, expr) in enumerate(items):
            name = alias
            if name is None:
                name = expr.name if isinstance(expr, ir.Col) else "_c%d" % i
            if name in seen:
                raise self.error("duplicate output column %r" % name)
            seen.add(name)
            out.append((name, expr))
        return tuple(out)


def _describe(t: Token) -> str:
    if t.kind == "eof":
        return "end of input"
    return repr(t.value if isinstance(t.value, str) else str(t.value))


def _has_agg(e: ir.Expr) -> bool:
    return any(isinstance(x, ir.Agg) for x in ir.walk_exprs(e))


def _forbid_aggs(e: ir.Expr, where: str):
    if _has_agg(e):
        raise ParseError("aggregates are not allowed in %s" % where, 0, 0)


def _output_names(q: ir.Rel):
    """Column names a query block exposes, or STAR when unknown."""
    node = q
    while True:
        if isinstance(node, (ir.Distinct,)):
            node = node.child
        elif isinstance(node, ir.UnionAll):
            node = node.left
        elif isinstance(node, ir.Project):
            if node.items is ir.STAR:
                return ir.STAR
            return [nm for nm, _ in node.items]
        else:
            return ir.STAR
