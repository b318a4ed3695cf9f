"""Event data model and CSV ingestion.

Raw log files become a single time-ordered insertion stream: one Log
insertion per event record, immediately followed by that event's
attribute rows, with a monotone sequence number acting as the monitor's
logical clock.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .relational import EVENT_DATA, LOG
from .values import Ts, ValueError_, parse_value

KNOWN_LIFECYCLES = ("start", "complete")

LOG_COLUMNS = ("case", "event", "activity", "timestamp", "lifecycle")
ATTR_COLUMNS = ("event", "lifecycle", "attribute", "value", "value_type")


class IngestError(Exception):
    """File-level ingestion failure (missing columns, bad rows)."""


@dataclass(frozen=True)
class EventRecord:
    case_id: str
    event_id: str
    activity: str
    ts: Ts
    lifecycle: str

    def log_tuple(self) -> tuple:
        return (self.case_id, self.event_id, self.activity, self.ts,
                self.lifecycle)


@dataclass(frozen=True)
class EventAttribute:
    event_id: str
    lifecycle: str
    attribute: str
    value: object

    def data_tuple(self) -> tuple:
        return (self.event_id, self.lifecycle, self.attribute, self.value)


@dataclass(frozen=True)
class InsertionDelta:
    """One base-relation insertion; sequence_no is the logical clock."""

    target: str  # "Log" | "EventData"
    tup: tuple
    sequence_no: int


@dataclass
class IngestDiagnostic:
    severity: str  # "warning"
    message: str
    line_no: int | None = None


def _resolve_columns(header, required, column_map, path):
    """Map logical column names to CSV indexes, honouring remaps."""
    positions = {}
    for logical in required:
        actual = (column_map or {}).get(logical, logical)
        if actual not in header:
            raise IngestError(
                f"{path}: missing mandatory column {actual!r} "
                f"(for {logical!r}); header has {header}")
        positions[logical] = header.index(actual)
    return positions


def parse_log_csv(path, column_map=None) -> list:
    """Read event records from a log CSV, preserving row order.

    Timestamps are ISO-8601; naive ones are interpreted as UTC.  A bad
    timestamp is a row-level error reported with its line number.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, header row required")
        pos = _resolve_columns(header, LOG_COLUMNS, column_map, path)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts = Ts.parse(row[pos["timestamp"]])
            except ValueError_ as exc:
                raise IngestError(f"{path}:{line_no}: {exc}") from exc
            records.append(EventRecord(
                case_id=row[pos["case"]],
                event_id=row[pos["event"]],
                activity=row[pos["activity"]],
                ts=ts,
                lifecycle=row[pos["lifecycle"]],
            ))
    return records


def parse_attribute_csv(path, column_map=None) -> list:
    """Read typed event attributes (semi-structured rows) from a CSV."""
    attrs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, header row required")
        pos = _resolve_columns(header, ATTR_COLUMNS, column_map, path)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            kind = row[pos["value_type"]]
            try:
                value = parse_value(row[pos["value"]], kind)
            except ValueError_ as exc:
                raise IngestError(f"{path}:{line_no}: {exc}") from exc
            attrs.append(EventAttribute(
                event_id=row[pos["event"]],
                lifecycle=row[pos["lifecycle"]],
                attribute=row[pos["attribute"]],
                value=value,
            ))
    return attrs


def merge_streams(streams) -> tuple:
    """Merge per-process record lists into one ordered stream.

    Sort key is (timestamp, event_id, lifecycle); the two extra keys are
    a deterministic tie-break, and the sort is stable for records whose
    full key coincides.  Duplicate (event_id, lifecycle) pairs keep the
    first occurrence and produce a diagnostic.

    Returns (records, diagnostics).
    """
    combined = []
    for stream in streams:
        combined.extend(stream)
    combined.sort(key=lambda r: (r.ts, r.event_id, r.lifecycle))

    diagnostics = []
    seen = set()
    unique = []
    for rec in combined:
        key = (rec.event_id, rec.lifecycle)
        if key in seen:
            diagnostics.append(IngestDiagnostic(
                "warning",
                f"duplicate (event_id, lifecycle) {key!r}; "
                "keeping first occurrence"))
            continue
        seen.add(key)
        unique.append(rec)
        if not rec.lifecycle:
            diagnostics.append(IngestDiagnostic(
                "warning", f"event {rec.event_id!r} has empty lifecycle"))
        elif rec.lifecycle not in KNOWN_LIFECYCLES:
            diagnostics.append(IngestDiagnostic(
                "warning",
                f"event {rec.event_id!r} has unknown lifecycle "
                f"{rec.lifecycle!r}"))
    return unique, diagnostics


def to_insertions(events, attributes) -> tuple:
    """Interleave Log and EventData insertions into one numbered stream.

    Each event is followed by its own attribute rows before the next
    event.  Attributes referencing unknown events go to the end of the
    stream with a diagnostic.

    Returns (deltas, diagnostics).
    """
    by_event = {}
    for attr in attributes:
        by_event.setdefault((attr.event_id, attr.lifecycle), []).append(attr)

    deltas = []
    diagnostics = []
    seq = 0
    for rec in events:
        seq += 1
        deltas.append(InsertionDelta(LOG, rec.log_tuple(), seq))
        for attr in by_event.pop((rec.event_id, rec.lifecycle), ()):
            seq += 1
            deltas.append(InsertionDelta(EVENT_DATA, attr.data_tuple(), seq))

    for key in sorted(by_event):
        for attr in by_event[key]:
            diagnostics.append(IngestDiagnostic(
                "warning",
                f"attribute {attr.attribute!r} references unknown event "
                f"{key!r}; emitted at end of stream"))
            seq += 1
            deltas.append(InsertionDelta(EVENT_DATA, attr.data_tuple(), seq))
    return deltas, diagnostics
