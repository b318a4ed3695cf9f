"""Synthetic print-shop event logs.

Four trace shapes share one simulated shop:

* flyer orders   receive flyer -> design -> send design
                 -> (reject -> redesign -> send design)* -> accept
                 -> print -> deliver
* poster orders  receive poster -> design -> print -> deliver
* bills          write bill -> print -> deliver; every order spawns one,
                 and the ``write bill`` event carries an ``order``
                 attribute naming the order case
* shipments      purchase -> deliver courier legs (no printing)

The printers are a shared resource: order and bill jobs queue on the
same machines.  Print events are start/complete lifecycle pairs sharing
one event id, and both rows carry ``printer`` and ``paper`` attributes.
All deliveries of a day leave with the 17:00 van, so a compliant day has
a single delivery moment; deliver events carry a ``car`` attribute.

Streams are deterministic per config.  Redesign-loop lengths come from
an RNG stream separate from everything else, so the total event count
for a given (flyers, redesign_prob, max_redesigns) can be searched over
seeds without generating whole logs.
"""

from __future__ import annotations

import csv
import random
import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

from .events import ATTR_COLUMNS, LOG_COLUMNS, EventAttribute, EventRecord
from .values import Ts, kind_of

FLYER_PAPER = "A5"
POSTER_PAPER = "A0"
BILL_PAPER = "A4"

_RECEIVE_BASE = 8 * 60        # orders arrive from 08:00
_RECEIVE_SPREAD = 150         # ... until 10:30
_PRESS_OPEN = 12 * 60         # printers run from noon
_PRESS_CLOSE = 16 * 60 + 45   # last job must complete by 16:45
_VAN_LEAVES = 17 * 60


class GeneratorError(Exception):
    """Config rejected or the simulated day cannot be scheduled."""


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for one synthetic log.

    ``active_days`` picks that many business days spread evenly across
    the date range (None means all of them); orders are dealt to the
    picked days round-robin.  The four ``*_prob`` knobs inject
    violations: slow print jobs (over ten minutes), print jobs started
    while the previous job on the printer is still running, bills
    written only after their order was delivered, and days where one
    delivery misses the van and leaves at 17:30.
    """

    seed: int = 0
    flyers: int = 20
    posters: int = 20
    shipments: int = 0
    start_day: str = "2017-01-02"
    end_day: str = "2017-06-30"
    active_days: int | None = None
    redesign_prob: float = 0.5
    max_redesigns: int = 6
    printers: int = 2
    cars: int = 3
    step_minutes: tuple = (4, 10)
    slow_print_prob: float = 0.02
    overlap_prob: float = 0.0
    late_bill_prob: float = 0.0
    late_van_prob: float = 0.0


def _check_config(cfg: GeneratorConfig) -> None:
    if cfg.flyers < 0 or cfg.posters < 0 or cfg.shipments < 0:
        raise GeneratorError("trace counts must be non-negative")
    if cfg.printers < 1:
        raise GeneratorError("need at least one printer")
    if cfg.cars < 1:
        raise GeneratorError("need at least one delivery car")
    if not 0.0 <= cfg.redesign_prob < 1.0:
        raise GeneratorError("redesign_prob must be in [0, 1)")
    for name in ("slow_print_prob", "overlap_prob", "late_bill_prob",
                 "late_van_prob"):
        p = getattr(cfg, name)
        if not 0.0 <= p <= 1.0:
            raise GeneratorError(f"{name} must be in [0, 1]")
    lo, hi = cfg.step_minutes
    if not 1 <= lo <= hi:
        raise GeneratorError("step_minutes must be 1 <= lo <= hi")
    if cfg.max_redesigns < 0:
        raise GeneratorError("max_redesigns must be non-negative")


def _parse_day(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise GeneratorError(f"bad day {text!r}: {exc}") from exc


def business_days(start_day: str, end_day: str) -> list:
    """All Monday-to-Friday dates in the inclusive range."""
    lo, hi = _parse_day(start_day), _parse_day(end_day)
    if hi < lo:
        raise GeneratorError(f"day range {start_day}..{end_day} is empty")
    out = []
    d = lo
    while d <= hi:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def _active_days(cfg: GeneratorConfig) -> list:
    days = business_days(cfg.start_day, cfg.end_day)
    if cfg.active_days is None or cfg.active_days == len(days):
        return days
    k = cfg.active_days
    if not 1 <= k <= len(days):
        raise GeneratorError(
            f"active_days {k} outside 1..{len(days)} for the range")
    if k == 1:
        return [days[0]]
    # even spread keeps every month of the range populated
    return [days[round(i * (len(days) - 1) / (k - 1))] for i in range(k)]


def _loop_counts(cfg: GeneratorConfig) -> list:
    """Redesign-loop length per flyer, from a dedicated RNG stream."""
    rng = random.Random(f"casemon-print-shop-loops:{cfg.seed}")
    counts = []
    for _ in range(cfg.flyers):
        k = 0
        while k < cfg.max_redesigns and rng.random() < cfg.redesign_prob:
            k += 1
        counts.append(k)
    return counts


def _at(day: date, minute: int) -> Ts:
    base = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    return Ts.from_datetime(base + timedelta(minutes=minute))


class _Emitter:
    """Accumulates records/attributes, assigning zero-padded event ids."""

    def __init__(self):
        self.records = []
        self.attrs = []
        self._n = 0

    def _next_id(self) -> str:
        self._n += 1
        return f"e{self._n:06d}"

    def event(self, case, activity, ts, lifecycle="complete", attrs=()):
        eid = self._next_id()
        self.records.append(EventRecord(case, eid, activity, ts, lifecycle))
        for name, value in attrs:
            self.attrs.append(EventAttribute(eid, lifecycle, name, value))
        return eid

    def span(self, case, activity, ts_start, ts_end, attrs=()):
        # one event id, two lifecycle rows, attributes on both
        eid = self._next_id()
        for lc, ts in (("start", ts_start), ("complete", ts_end)):
            self.records.append(EventRecord(case, eid, activity, ts, lc))
            for name, value in attrs:
                self.attrs.append(EventAttribute(eid, lc, name, value))
        return eid


@dataclass
class _Job:
    case: str
    paper: str
    ready: int  # minutes since the day's midnight


def generate_log(cfg: GeneratorConfig) -> tuple:
    """Simulate the shop; returns time-sorted (records, attributes).

    Every trace starts and finishes on one active day, except bills
    written after the 17:00 van left, which print and deliver the next
    active day.  Raises GeneratorError when a day's print jobs cannot
    all complete before the van leaves.
    """
    _check_config(cfg)
    rng = random.Random(f"casemon-print-shop:{cfg.seed}")
    loops = _loop_counts(cfg)
    days = _active_days(cfg)

    def step() -> int:
        return rng.randint(*cfg.step_minutes)

    def car() -> str:
        return f"car {rng.randint(1, cfg.cars)}"

    kinds = ["flyer"] * cfg.flyers + ["poster"] * cfg.posters
    rng.shuffle(kinds)
    per_day = [[] for _ in days]
    for i, kind in enumerate(kinds):
        per_day[i % len(days)].append(kind)

    purchases = [[] for _ in days]
    deliveries_due = [[] for _ in days]
    for j in range(cfg.shipments):
        di = rng.randrange(len(days))
        dj = min(di + rng.randint(1, 5), len(days) - 1)
        sid = f"s{j + 1:04d}"
        purchases[di].append(sid)
        deliveries_due[dj].append(sid)

    emit = _Emitter()
    flyer_no = 0
    order_no = 0
    carried = []  # bill jobs written after the van, printed next day

    for d, day in enumerate(days):
        jobs = carried
        carried = []
        for job in jobs:
            job.ready = _RECEIVE_BASE + rng.randint(0, 60)

        for kind in per_day[d]:
            order_no += 1
            case = f"{kind[0]}{order_no:04d}"
            received = _RECEIVE_BASE + rng.randint(0, _RECEIVE_SPREAD)
            t = received
            emit.event(case, f"receive {kind}", _at(day, t))
            t += step()
            emit.event(case, "design", _at(day, t))
            if kind == "flyer":
                t += step()
                emit.event(case, "send design", _at(day, t))
                for _ in range(loops[flyer_no]):
                    for activity in ("reject", "redesign", "send design"):
                        t += step()
                        emit.event(case, activity, _at(day, t))
                t += step()
                emit.event(case, "accept", _at(day, t))
                flyer_no += 1
                paper = FLYER_PAPER
            else:
                paper = POSTER_PAPER
            jobs.append(_Job(case, paper, t + step()))

            bill = f"b{order_no:04d}"
            late = cfg.late_bill_prob > 0.0 and d + 1 < len(days) \
                and rng.random() < cfg.late_bill_prob
            wt = _VAN_LEAVES + 5 + rng.randint(0, 55) if late \
                else received + step()
            emit.event(bill, "write bill", _at(day, wt),
                       attrs=(("order", case),))
            target = carried if late else jobs
            target.append(_Job(bill, BILL_PAPER, wt + step()))

        for sid in purchases[d]:
            emit.event(sid, "purchase", _at(day, 600 + rng.randint(0, 240)))

        # shared printers: earliest-free machine runs the next ready job
        jobs.sort(key=lambda j: (j.ready, j.case))
        names = [f"Printer {i + 1}" for i in range(cfg.printers)]
        cursor = {name: _PRESS_OPEN for name in names}
        last = {}  # printer -> (start, end) of its latest job
        delivered = []
        for job in jobs:
            printer = min(names, key=lambda n: (cursor[n], n))
            start = max(job.ready, cursor[printer])
            if printer in last and rng.random() < cfg.overlap_prob:
                prev_start, prev_end = last[printer]
                injected = max(job.ready, prev_start + 1)
                if injected < prev_end:
                    start = injected
            minutes = rng.randint(11, 25) \
                if rng.random() < cfg.slow_print_prob else rng.randint(2, 8)
            end = start + minutes
            if end > _PRESS_CLOSE:
                raise GeneratorError(
                    f"{day}: print queue overflows the press day; "
                    "spread orders over more days")
            emit.span(job.case, "print", _at(day, start), _at(day, end),
                      attrs=(("printer", printer), ("paper", job.paper)))
            last[printer] = (start, end)
            cursor[printer] = max(cursor[printer], end + rng.randint(0, 3))
            delivered.append(job.case)

        vans = delivered + deliveries_due[d]
        missed = -1
        if len(vans) >= 2 and cfg.late_van_prob > 0.0 \
                and rng.random() < cfg.late_van_prob:
            missed = rng.randrange(len(vans))
        for i, case in enumerate(vans):
            minute = _VAN_LEAVES + (30 if i == missed else 0)
            emit.event(case, "deliver", _at(day, minute),
                       attrs=(("car", car()),))

    emit.records.sort(key=lambda r: (r.ts, r.event_id, r.lifecycle))
    validate_stream(emit.records, emit.attrs)
    return emit.records, emit.attrs


# --- trace validation --------------------------------------------------

_SHAPES = {
    "receive flyer": re.compile(
        r"receive flyer/c;design/c;send design/c;"
        r"(reject/c;redesign/c;send design/c;)*"
        r"accept/c;print/s;print/c;deliver/c;"),
    "receive poster": re.compile(
        r"receive poster/c;design/c;print/s;print/c;deliver/c;"),
    "write bill": re.compile(r"write bill/c;print/s;print/c;deliver/c;"),
    "purchase": re.compile(r"purchase/c;deliver/c;"),
}


def validate_trace(case: str, events: list) -> None:
    """Check one case's events against its process shape.

    ``events`` must be time-ordered.  The shape is chosen by the first
    activity; print pairs must share an event id.
    """
    for prev, cur in zip(events, events[1:]):
        if cur.ts < prev.ts:
            raise GeneratorError(f"{case}: events out of time order")
    shape = _SHAPES.get(events[0].activity)
    if shape is None:
        raise GeneratorError(
            f"{case}: unknown first activity {events[0].activity!r}")
    tokens = "".join(
        f"{e.activity}/{e.lifecycle[0]};" for e in events)
    if not shape.fullmatch(tokens):
        raise GeneratorError(f"{case}: trace {tokens!r} breaks its shape")
    for prev, cur in zip(events, events[1:]):
        if cur.activity == "print" and cur.lifecycle == "complete" \
                and cur.event_id != prev.event_id:
            raise GeneratorError(f"{case}: print pair ids differ")


def validate_stream(records: list, attrs: list) -> None:
    """Validate every trace and the attribute conventions."""
    by_case = {}
    for rec in records:
        by_case.setdefault(rec.case_id, []).append(rec)
    for case, events in by_case.items():
        validate_trace(case, events)

    have = {}
    for attr in attrs:
        have.setdefault((attr.event_id, attr.lifecycle), set()) \
            .add(attr.attribute)
    for rec in records:
        names = have.get((rec.event_id, rec.lifecycle), set())
        if rec.activity == "print" and names != {"printer", "paper"}:
            raise GeneratorError(
                f"print event {rec.event_id}/{rec.lifecycle} "
                f"carries {sorted(names)}")
        if rec.activity == "deliver" and names != {"car"}:
            raise GeneratorError(
                f"deliver event {rec.event_id} carries {sorted(names)}")
        if rec.activity == "write bill" and names != {"order"}:
            raise GeneratorError(
                f"write bill event {rec.event_id} carries {sorted(names)}")


# --- CSV output ---------------------------------------------------------

def _render_cell(value) -> tuple:
    kind = kind_of(value)
    if value is None:
        return "", "text"
    if kind == "timestamp":
        return value.isoformat(), kind
    if kind == "bool":
        return ("true" if value else "false"), kind
    return str(value), kind


def write_log_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for r in records:
            writer.writerow((r.case_id, r.event_id, r.activity,
                             r.ts.isoformat(), r.lifecycle))


def write_attribute_csv(attrs, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTR_COLUMNS)
        for a in attrs:
            text, kind = _render_cell(a.value)
            writer.writerow((a.event_id, a.lifecycle, a.attribute,
                             text, kind))


# Sized so the merged stream is exactly 30636 insertions spread over 101
# business days and all six months of the range; the seed pins the
# redesign-loop total that closes the arithmetic.
EXPERIMENT_CONFIG = GeneratorConfig(
    seed=192,
    flyers=800,
    posters=500,
    shipments=100,
    active_days=101,
    redesign_prob=0.53,
)
