"""Typed value domain shared by the store, the query language and the engine.

Five concrete kinds (text, int, decimal, bool, timestamp) plus a null
marker (Python ``None``).  Timestamps are UTC with millisecond precision.
A sixth pseudo-kind ``any`` exists only for the semi-structured attribute
column of the event-data relation: values of any concrete kind may appear
in such a column, and only equality comparison is defined on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation

KINDS = ("text", "int", "decimal", "bool", "timestamp")

#: Pseudo-kind for heterogeneous columns (EventData.value).
ANY = "any"


class ValueError_(ValueError):
    """Raised for malformed value literals and kind violations."""


@dataclass(frozen=True, order=True)
class Ts:
    """A UTC timestamp with millisecond precision."""

    millis: int

    @classmethod
    def from_datetime(cls, dt: datetime) -> "Ts":
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return cls(int(round(dt.timestamp() * 1000)))

    @classmethod
    def parse(cls, text: str) -> "Ts":
        """Parse an ISO-8601 timestamp; naive inputs are taken as UTC."""
        raw = text.strip()
        if raw.endswith(("Z", "z")):
            raw = raw[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(raw)
        except ValueError as exc:
            raise ValueError_(f"unparseable timestamp {text!r}") from exc
        return cls.from_datetime(dt)

    def to_datetime(self) -> datetime:
        return datetime.fromtimestamp(self.millis / 1000.0, tz=timezone.utc)

    def isoformat(self) -> str:
        dt = self.to_datetime()
        base = dt.strftime("%Y-%m-%dT%H:%M:%S")
        ms = self.millis % 1000
        if ms:
            return f"{base}.{ms:03d}Z"
        return base + "Z"

    def field(self, name: str) -> int:
        """Calendar component (year|month|day|hour|minute) in UTC."""
        dt = self.to_datetime()
        try:
            return getattr(dt, name)
        except AttributeError:
            raise ValueError_(f"unknown timestamp field {name!r}") from None

    def trunc(self, unit: str) -> "Ts":
        """Truncate to a UTC calendar boundary (day or month start)."""
        dt = self.to_datetime()
        if unit == "day":
            dt = dt.replace(hour=0, minute=0, second=0, microsecond=0)
        elif unit == "month":
            dt = dt.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
        else:
            raise ValueError_(f"unknown truncation unit {unit!r}")
        return Ts.from_datetime(dt)

    def __repr__(self) -> str:
        return f"Ts({self.isoformat()})"


def kind_of(value) -> str | None:
    """Concrete kind of a runtime value, or None for the null marker."""
    if value is None:
        return None
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, Decimal):
        return "decimal"
    if isinstance(value, str):
        return "text"
    if isinstance(value, Ts):
        return "timestamp"
    raise ValueError_(f"value {value!r} is outside the value domain")


def conforms(value, kind: str) -> bool:
    """Does a runtime value fit a declared column kind (null fits all)?"""
    if value is None:
        return True
    actual = kind_of(value)
    if kind == ANY:
        return True
    if kind == "decimal":
        # ints are embedded in the decimal kind exactly
        return actual in ("decimal", "int")
    return actual == kind


def numeric(kind: str) -> bool:
    return kind in ("int", "decimal")


def merge_numeric(a: str, b: str) -> str:
    """Result kind of arithmetic between two numeric kinds."""
    return "int" if a == "int" and b == "int" else "decimal"


def eq_values(a, b):
    """Engine equality: tri-state (True/False/None for null operands).

    Cross-kind equality on dynamic columns is plain False, never an
    implicit cast; int and decimal form one numeric family and compare
    exactly (Decimal == int is exact in Python).
    """
    if a is None or b is None:
        return None
    ka, kb = kind_of(a), kind_of(b)
    if ka != kb:
        if numeric(ka) and numeric(kb):
            return a == b
        return False
    return a == b


def cmp_values(a, b, op: str):
    """Ordering comparison; null yields None, kind mismatch raises."""
    if a is None or b is None:
        return None
    ka, kb = kind_of(a), kind_of(b)
    if ka != kb and not (numeric(ka) and numeric(kb)):
        raise ValueError_(f"cannot order {ka} against {kb}")
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError_(f"unknown comparison {op!r}")


def parse_value(text: str, kind: str):
    """Parse a CSV cell into a typed value. Empty text means null."""
    if text == "":
        return None
    if kind == "text":
        return text
    if kind == "int":
        try:
            return int(text)
        except ValueError as exc:
            raise ValueError_(f"bad int literal {text!r}") from exc
    if kind == "decimal":
        try:
            return Decimal(text)
        except InvalidOperation as exc:
            raise ValueError_(f"bad decimal literal {text!r}") from exc
    if kind == "bool":
        low = text.strip().lower()
        if low in ("true", "1", "t", "yes"):
            return True
        if low in ("false", "0", "f", "no"):
            return False
        raise ValueError_(f"bad bool literal {text!r}")
    if kind == "timestamp":
        return Ts.parse(text)
    raise ValueError_(f"unknown value kind {kind!r}")


def render_value(value) -> str:
    """Canonical text form used in CSV output and case keys."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Ts):
        return value.isoformat()
    return str(value)
