"""Compile scalar expressions to Python closures.

Both evaluators share this, so a predicate can only ever mean one thing.
A compiled closure takes ``(row, env)`` where env is the tuple of enclosing
rows, outermost first; decorrelated plans always pass ``()``.

Comparisons are three-valued: missing operands make them unknown (None),
and unknown collapses to False wherever a predicate gates rows.
"""
from __future__ import annotations

from decimal import Decimal
from typing import Callable, Optional

from ..values import Ts, cmp_values, eq_values
from ..lang import ir

Compiled = Callable[[tuple, tuple], object]

_MINUTE = Decimal(60000)


def compile_expr(e: ir.Expr, exists_fn=None) -> Compiled:
    """exists_fn(node) -> Compiled handles subqueries; None forbids them."""
    if isinstance(e, ir.Lit):
        v = e.value
        return lambda row, env: v
    if isinstance(e, ir.Col):
        lv, idx, _ = e.bound()
        if lv == 0:
            return lambda row, env: row[idx]
        return lambda row, env: env[-lv][idx]
    if isinstance(e, ir.Arith):
        left = compile_expr(e.left, exists_fn)
        right = compile_expr(e.right, exists_fn)
        if e.op == "/":

            def div(row, env):
                a, b = left(row, env), right(row, env)
                if a is None or b is None or b == 0:
                    return None
                return Decimal(a) / Decimal(b)

            return div
        op = e.op

        def arith(row, env):
            a, b = left(row, env), right(row, env)
            if a is None or b is None:
                return None
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            return a * b

        return arith
    if isinstance(e, ir.Neg):
        operand = compile_expr(e.operand, exists_fn)

        def neg(row, env):
            v = operand(row, env)
            return None if v is None else -v

        return neg
    if isinstance(e, ir.Cmp):
        left = compile_expr(e.left, exists_fn)
        right = compile_expr(e.right, exists_fn)
        op = e.op
        if op == "=":
            return lambda row, env: eq_values(left(row, env), right(row, env))
        if op == "<>":

            def ne(row, env):
                r = eq_values(left(row, env), right(row, env))
                return None if r is None else not r

            return ne

        return lambda row, env: cmp_values(left(row, env), right(row, env), op)
    if isinstance(e, ir.And):
        left = compile_expr(e.left, exists_fn)
        right = compile_expr(e.right, exists_fn)

        def and_(row, env):
            a = left(row, env)
            if a is False:
                return False
            b = right(row, env)
            if b is False:
                return False
            return None if (a is None or b is None) else True

        return and_
    if isinstance(e, ir.Or):
        left = compile_expr(e.left, exists_fn)
        right = compile_expr(e.right, exists_fn)

        def or_(row, env):
            a = left(row, env)
            if a is True:
                return True
            b = right(row, env)
            if b is True:
                return True
            return None if (a is None or b is None) else False

        return or_
    if isinstance(e, ir.Not):
        operand = compile_expr(e.operand, exists_fn)

        def not_(row, env):
            v = operand(row, env)
            return None if v is None else not v

        return not_
    if isinstance(e, ir.ExtractField):
        operand = compile_expr(e.operand, exists_fn)
        field = e.field

        def extract(row, env):
            v = operand(row, env)
            return None if v is None else v.field(field)

        return extract
    if isinstance(e, ir.TruncTs):
        operand = compile_expr(e.operand, exists_fn)
        unit = e.unit

        def trunc(row, env):
            v = operand(row, env)
            return None if v is None else v.trunc(unit)

        return trunc
    if isinstance(e, ir.MinutesBetween):
        start = compile_expr(e.start, exists_fn)
        end = compile_expr(e.end, exists_fn)

        def minutes(row, env):
            a, b = start(row, env), end(row, env)
            if a is None or b is None:
                return None
            assert isinstance(a, Ts) and isinstance(b, Ts)
            return Decimal(b.millis - a.millis) / _MINUTE

        return minutes
    if isinstance(e, ir.Exists):
        if exists_fn is None:
            raise ValueError("EXISTS cannot appear in a compiled plan expression")
        return exists_fn(e)
    raise ValueError("cannot compile %r" % (e,))


def predicate(e: ir.Expr, exists_fn=None) -> Compiled:
    """Like compile_expr but collapses unknown to False at the boundary."""
    f = compile_expr(e, exists_fn)
    return lambda row, env: f(row, env) is True
