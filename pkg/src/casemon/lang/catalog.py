"""Table and view registry queries are checked against."""
from __future__ import annotations

from typing import Dict

from ..relational import (
    EVENT_DATA, EVENT_DATA_SCHEMA, LOG, LOG_SCHEMA, NOW, NOW_SCHEMA, Schema,
)
from . import ir

# Events pairs every log row with each of its recorded attributes; the join
# is on both event id and lifecycle so start/complete payloads stay apart.
EVENTS_VIEW_SQL = """
SELECT l.case_id AS case_id, l.event_id AS event_id, l.activity AS activity,
       l.ts AS ts, l.lifecycle AS lifecycle,
       d.attribute AS attribute, d.value AS value
FROM Log l JOIN EventData d ON l.event_id = d.event_id AND l.lifecycle = d.lifecycle
"""


class Catalog:
    def __init__(self):
        self.relations: Dict[str, Schema] = {}
        self.views: Dict[str, ir.Rel] = {}

    def add_relation(self, name: str, schema: Schema):
        self.relations[name] = schema

    def add_view(self, name: str, definition):
        """Register a named view; accepts dialect text or parsed IR."""
        if isinstance(definition, str):
            from .parser import parse

            definition = parse(definition)
        self.views[name] = definition

    def copy(self) -> "Catalog":
        out = Catalog()
        out.relations = dict(self.relations)
        out.views = dict(self.views)
        return out

    @classmethod
    def default(cls) -> "Catalog":
        cat = cls()
        cat.add_relation(LOG, LOG_SCHEMA)
        cat.add_relation(EVENT_DATA, EVENT_DATA_SCHEMA)
        cat.add_relation(NOW, NOW_SCHEMA)
        cat.add_view("Events", EVENTS_VIEW_SQL)
        return cat
