"""In-memory bag-semantics relational store.

Base relations are insert-only from the outside; the single-tuple "Now"
relation advances to the maximum event timestamp seen, which is the one
internally generated deletion at the base level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .values import Ts, conforms

LOG = "Log"
EVENT_DATA = "EventData"
NOW = "Now"


class StoreError(Exception):
    """Bad tuple shape or unknown relation."""


@dataclass(frozen=True)
class Schema:
    """Ordered attribute list: ((name, kind), ...); names unique."""

    fields: tuple

    def __post_init__(self):
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise StoreError(f"duplicate attribute names in schema {names}")

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.fields)

    @property
    def kinds(self) -> tuple:
        return tuple(k for _, k in self.fields)

    def __len__(self) -> int:
        return len(self.fields)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.fields):
            if n == name:
                return i
        raise StoreError(f"no attribute {name!r} in schema {self.names}")


LOG_SCHEMA = Schema((
    ("case_id", "text"),
    ("event_id", "text"),
    ("activity", "text"),
    ("ts", "timestamp"),
    ("lifecycle", "text"),
))

EVENT_DATA_SCHEMA = Schema((
    ("event_id", "text"),
    ("lifecycle", "text"),
    ("attribute", "text"),
    ("value", "any"),
))

NOW_SCHEMA = Schema((("now_ts", "timestamp"),))

#: Timestamp of an empty log; predates any plausible event.
EPOCH = Ts(0)


class BagRelation:
    """Multiset of tuples: mapping tuple -> positive multiplicity."""

    __slots__ = ("schema", "rows")

    def __init__(self, schema: Schema, rows=None):
        self.schema = schema
        self.rows: dict = dict(rows) if rows else {}

    def add(self, tup: tuple, mult: int = 1):
        """Apply a signed multiplicity; zero-count tuples are removed."""
        new = self.rows.get(tup, 0) + mult
        if new > 0:
            self.rows[tup] = new
        elif new == 0:
            self.rows.pop(tup, None)
        else:
            raise StoreError(f"multiplicity of {tup!r} driven below zero")

    def multiplicity(self, tup: tuple) -> int:
        return self.rows.get(tup, 0)

    def total(self) -> int:
        return sum(self.rows.values())

    def distinct_count(self) -> int:
        return len(self.rows)

    def copy(self) -> "BagRelation":
        return BagRelation(self.schema, self.rows)

    def __iter__(self):
        return iter(self.rows.items())

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, BagRelation) and self.rows == other.rows

    def __repr__(self):
        return f"BagRelation({self.schema.names}, {len(self.rows)} distinct)"


class Database:
    """The three base relations; Now always holds exactly one tuple."""

    def __init__(self):
        self.relations = {
            LOG: BagRelation(LOG_SCHEMA),
            EVENT_DATA: BagRelation(EVENT_DATA_SCHEMA),
            NOW: BagRelation(NOW_SCHEMA, {(EPOCH,): 1}),
        }

    def scan(self, name: str) -> BagRelation:
        """Snapshot of current contents (safe to hold across inserts)."""
        try:
            return self.relations[name].copy()
        except KeyError:
            raise StoreError(f"unknown relation {name!r}") from None

    def relation(self, name: str) -> BagRelation:
        try:
            return self.relations[name]
        except KeyError:
            raise StoreError(f"unknown relation {name!r}") from None

    def now(self) -> Ts:
        (tup,) = self.relations[NOW].rows
        return tup[0]

    def insert(self, target: str, tup: tuple) -> list:
        """Insert one tuple; returns the applied base delta set.

        The returned list holds (relation, tuple, signed multiplicity)
        triples: the insertion itself plus, for Log rows that advance the
        event clock, the retraction/assertion pair on Now.
        """
        rel = self.relation(target)
        if target == NOW:
            raise StoreError("Now is engine-maintained, not insertable")
        if len(tup) != len(rel.schema):
            raise StoreError(
                f"arity mismatch for {target}: got {len(tup)}, "
                f"want {len(rel.schema)}")
        for v, (name, kind) in zip(tup, rel.schema.fields):
            if not conforms(v, kind):
                raise StoreError(
                    f"kind mismatch for {target}.{name}: {v!r} is not {kind}")
        rel.add(tup, 1)
        applied = [(target, tup, 1)]
        if target == LOG:
            ts = tup[LOG_SCHEMA.index("ts")]
            applied.extend(self.advance_now(ts))
        return applied

    def advance_now(self, ts: Ts) -> list:
        """Move Now forward to max(Now, ts); empty delta if not ahead."""
        current = self.now()
        if ts is None or ts <= current:
            return []
        now_rel = self.relations[NOW]
        now_rel.add((current,), -1)
        now_rel.add((ts,), 1)
        return [(NOW, (current,), -1), (NOW, (ts,), 1)]
