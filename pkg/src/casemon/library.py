"""Ready-made constraint ensembles for the print-shop processes.

Each entry carries the constraint's prose statement, the ensemble source
in the query dialect, and the set of language features the queries rely
on.  The shipping-domain entries (same-car, avg-shipping, followed-by)
expect logs whose delivery events carry a ``car`` attribute; the ISC
entries expect the print-shop logs produced by :mod:`casemon.generator`:

* flyer orders: receive flyer -> design -> send design -> (reject ->
  redesign -> send design)* -> accept -> print -> deliver
* poster orders: receive poster -> design -> print -> deliver
* every order spawns a bill: write bill -> print -> deliver, where the
  ``write bill`` event carries an ``order`` attribute naming the order
* print events come as start/complete pairs carrying ``printer`` and
  ``paper`` attributes

Day- and month-scoped entries join the event clock only through
``DATE_OF``/``MONTH_OF`` projections, so sub-day clock movement never
reaches the expensive operators.
"""
from __future__ import annotations

from dataclasses import dataclass
from difflib import get_close_matches
from typing import FrozenSet, Tuple

from .ensemble import ConstraintEnsemble, parse_constraint_text

#: statement-derived reconstruction marker, used by every entry below
PROSE_DERIVED = "reconstructed from the prose statement; feature tags pin the shape"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    prose: str
    mode: str
    source: str
    provenance: str
    tags: FrozenSet[str]

    def ensemble(self) -> ConstraintEnsemble:
        return parse_constraint_text(self.source, origin="catalog:%s" % self.name)


class CatalogLookupError(LookupError):
    pass


# ---------------------------------------------------------------- shipping

_SAME_CAR_DAY = """
constraint same-car-day mode postmortem

# Delivery events carry the shipping car in the 'car' attribute.
VIEW deliveries:
  SELECT e.case_id AS case_id, e.value AS car, DATE_OF(e.ts) AS day
  FROM Events e
  WHERE e.activity = 'deliver' AND e.lifecycle = 'complete' AND e.attribute = 'car'

CASE:
  SELECT DISTINCT d.car AS car, d.day AS day FROM deliveries d

VIOL:
  SELECT g.car AS car, g.day AS day
  FROM (SELECT d.car AS car, d.day AS day, COUNT(*) AS n
        FROM deliveries d GROUP BY d.car, d.day) g
  WHERE g.n > 7
"""

_SAME_CAR_COARSE = """
constraint same-car-coarse mode postmortem

VIEW deliveries:
  SELECT e.case_id AS case_id, e.value AS car, DATE_OF(e.ts) AS day
  FROM Events e
  WHERE e.activity = 'deliver' AND e.lifecycle = 'complete' AND e.attribute = 'car'

CASE:
  SELECT DISTINCT d.car AS car FROM deliveries d

VIOL:
  SELECT DISTINCT g.car AS car
  FROM (SELECT d.car AS car, d.day AS day, COUNT(*) AS n
        FROM deliveries d GROUP BY d.car, d.day) g
  WHERE g.n > 7
"""

_SAME_CAR_FINE = """
constraint same-car-fine mode postmortem

VIEW deliveries:
  SELECT e.case_id AS case_id, e.value AS car, DATE_OF(e.ts) AS day
  FROM Events e
  WHERE e.activity = 'deliver' AND e.lifecycle = 'complete' AND e.attribute = 'car'

VIEW counted:
  SELECT d.car AS car, d.day AS day, COUNT(*) AS n
  FROM deliveries d GROUP BY d.car, d.day

CASE:
  SELECT c.car AS car, c.day AS day, c.n AS n FROM counted c

VIOL:
  SELECT c.car AS car, c.day AS day, c.n AS n FROM counted c WHERE c.n > 7
"""

_AVG_SHIPPING = """
constraint avg-shipping mode postmortem

# One case per package; shipping time measured purchase -> deliver.
VIEW legs:
  SELECT p.case_id AS case_id, MINUTES_BETWEEN(p.ts, d.ts) AS mins
  FROM Log p, Log d
  WHERE p.case_id = d.case_id
    AND p.activity = 'purchase' AND p.lifecycle = 'complete'
    AND d.activity = 'deliver' AND d.lifecycle = 'complete'

CASE:
  SELECT DISTINCT l.case_id AS case_id FROM legs l

VIOL:
  # between two and five days, i.e. 2880..7200 minutes on average
  SELECT g.case_id AS case_id
  FROM (SELECT l.case_id AS case_id, AVG(l.mins) AS a
        FROM legs l GROUP BY l.case_id) g
  WHERE g.a < 2880 OR g.a > 7200
"""

_FOLLOWED_BY = """
constraint followed-by-20h mode monitor

# Every 'a' must be answered by a 'b' within 20 hours (1200 minutes);
# activity 'c' closes the trace.

VIEW a_events:
  SELECT l.case_id AS case_id, l.event_id AS event_id, l.ts AS ts
  FROM Log l WHERE l.activity = 'a' AND l.lifecycle = 'complete'

VIEW answered:
  SELECT DISTINCT a.case_id AS case_id, a.event_id AS event_id
  FROM a_events a, Log b
  WHERE a.case_id = b.case_id AND b.activity = 'b' AND b.lifecycle = 'complete'
    AND b.ts >= a.ts AND MINUTES_BETWEEN(a.ts, b.ts) <= 1200

VIEW open_a:
  SELECT a.case_id AS case_id, a.event_id AS event_id, a.ts AS ts
  FROM a_events a
  WHERE (a.case_id, a.event_id) NOT IN
        (SELECT t.case_id AS case_id, t.event_id AS event_id FROM answered t)

VIEW expired:
  SELECT DISTINCT o.case_id AS case_id
  FROM open_a o, Now n
  WHERE MINUTES_BETWEEN(o.ts, n.now_ts) > 1200

VIEW closed:
  SELECT DISTINCT l.case_id AS case_id FROM Log l
  WHERE l.activity = 'c' AND l.lifecycle = 'complete'

CASE:
  SELECT DISTINCT l.case_id AS case_id FROM Log l

VIOL_PERM:
  SELECT DISTINCT e.case_id AS case_id FROM expired e
  UNION
  SELECT DISTINCT c.case_id AS case_id FROM closed c
  WHERE c.case_id IN (SELECT o.case_id AS case_id FROM open_a o)

VIOL_PENDING:
  SELECT DISTINCT o.case_id AS case_id FROM open_a o
  WHERE o.case_id NOT IN (SELECT e.case_id AS case_id FROM expired e)
    AND o.case_id NOT IN (SELECT c.case_id AS case_id FROM closed c)

SAT_PENDING:
  SELECT DISTINCT l.case_id AS case_id FROM Log l
  WHERE l.case_id NOT IN (SELECT o.case_id AS case_id FROM open_a o)
    AND l.case_id NOT IN (SELECT c.case_id AS case_id FROM closed c)
"""

_SAME_CAR_MONITOR = """
constraint same-car-monitor mode monitor

VIEW deliveries:
  SELECT e.case_id AS case_id, e.value AS car, DATE_OF(e.ts) AS day
  FROM Events e
  WHERE e.activity = 'deliver' AND e.lifecycle = 'complete' AND e.attribute = 'car'

VIEW too_many:
  SELECT g.car AS car, g.day AS day
  FROM (SELECT d.car AS car, d.day AS day, COUNT(*) AS n
        FROM deliveries d GROUP BY d.car, d.day) g
  WHERE g.n > 7

VIEW today:
  SELECT DISTINCT DATE_OF(n.now_ts) AS day FROM Now n

CASE:
  SELECT DISTINCT d.car AS car, d.day AS day FROM deliveries d

VIOL_PERM:
  SELECT DISTINCT m.car AS car, m.day AS day FROM too_many m

# An eighth delivery makes the violation permanent at once, so no
# (car, day) pair is ever pending-violating.
VIOL_PENDING:
  SELECT DISTINCT d.car AS car, d.day AS day FROM deliveries d WHERE 0 = 1

SAT_PENDING:
  SELECT DISTINCT d.car AS car, d.day AS day FROM deliveries d, today t
  WHERE d.day >= t.day
    AND (d.car, d.day) NOT IN (SELECT m.car AS car, m.day AS day FROM too_many m)
"""

# --------------------------------------------------------------- print shop

_ISC1 = """
constraint ISC1 mode monitor

# One delivery moment per day, and every order/bill finished that day
# (print completed) must be delivered that same day.

VIEW days:
  SELECT DISTINCT DATE_OF(l.ts) AS day FROM Log l

VIEW today:
  SELECT DISTINCT DATE_OF(n.now_ts) AS day FROM Now n

VIEW dlv:
  SELECT DISTINCT DATE_OF(l.ts) AS day, l.ts AS ts FROM Log l
  WHERE l.activity = 'deliver' AND l.lifecycle = 'complete'

VIEW dlv_cases:
  SELECT DISTINCT l.case_id AS case_id, DATE_OF(l.ts) AS day FROM Log l
  WHERE l.activity = 'deliver' AND l.lifecycle = 'complete'

VIEW fin:
  SELECT DISTINCT l.case_id AS case_id, DATE_OF(l.ts) AS day FROM Log l
  WHERE l.activity = 'print' AND l.lifecycle = 'complete'

# days whose deliveries are not simultaneous
VIEW multi:
  SELECT DISTINCT a.day AS day FROM dlv a, dlv b
  WHERE a.day = b.day AND a.ts <> b.ts

# finished orders that were not delivered on their finish day
VIEW undelivered:
  SELECT DISTINCT f.day AS day FROM fin f
  WHERE (f.case_id, f.day) NOT IN
        (SELECT d.case_id AS case_id, d.day AS day FROM dlv_cases d)

CASE:
  SELECT DISTINCT d.day AS day FROM days d

VIOL_PERM:
  SELECT DISTINCT m.day AS day FROM multi m
  UNION
  SELECT DISTINCT d.day AS day FROM days d, today t
  WHERE d.day < t.day
    AND NOT EXISTS (SELECT x.ts AS ts FROM dlv x WHERE x.day = d.day)
  UNION
  SELECT DISTINCT u.day AS day FROM undelivered u, today t WHERE u.day < t.day

VIOL_PENDING:
  SELECT DISTINCT d.day AS day FROM days d, today t
  WHERE d.day >= t.day
    AND NOT EXISTS (SELECT x.ts AS ts FROM dlv x WHERE x.day = d.day)
  UNION
  SELECT DISTINCT u.day AS day FROM undelivered u, today t
  WHERE u.day >= t.day
    AND u.day NOT IN (SELECT m.day AS day FROM multi m)

SAT_PENDING:
  SELECT DISTINCT x.day AS day FROM dlv x, today t
  WHERE x.day >= t.day
    AND x.day NOT IN (SELECT m.day AS day FROM multi m)
    AND NOT EXISTS
        (SELECT f.case_id AS case_id FROM fin f
         WHERE f.day = x.day
           AND (f.case_id, f.day) NOT IN
               (SELECT dc.case_id AS case_id, dc.day AS day FROM dlv_cases dc))
"""

_ISC2A = """
constraint ISC2a mode monitor

# Print jobs are start/complete pairs sharing an event id; a month
# breaches once more than 5% of its completed jobs ran over 10 minutes.

VIEW pj:
  SELECT s.event_id AS event_id, MONTH_OF(c.ts) AS m,
         MINUTES_BETWEEN(s.ts, c.ts) AS mins
  FROM Log s, Log c
  WHERE s.event_id = c.event_id
    AND s.activity = 'print' AND s.lifecycle = 'start'
    AND c.activity = 'print' AND c.lifecycle = 'complete'

VIEW slow_stats:
  SELECT p.m AS m, COUNT(*) AS slow FROM pj p WHERE p.mins > 10 GROUP BY p.m

VIEW all_stats:
  SELECT p.m AS m, COUNT(*) AS total FROM pj p GROUP BY p.m

VIEW bad_months:
  SELECT DISTINCT s.m AS m FROM slow_stats s, all_stats a
  WHERE s.m = a.m AND s.slow * 20 > a.total

VIEW pmonths:
  SELECT DISTINCT MONTH_OF(l.ts) AS m FROM Log l
  WHERE EXISTS (SELECT c.event_id AS event_id FROM Log c
                WHERE MONTH_OF(c.ts) = MONTH_OF(l.ts)
                  AND c.activity = 'print' AND c.lifecycle = 'complete')

VIEW thismonth:
  SELECT DISTINCT MONTH_OF(n.now_ts) AS m FROM Now n

CASE:
  SELECT DISTINCT p.m AS m FROM pmonths p

VIOL_PERM:
  SELECT DISTINCT b.m AS m FROM bad_months b, thismonth t WHERE b.m < t.m

VIOL_PENDING:
  SELECT DISTINCT b.m AS m FROM bad_months b, thismonth t WHERE b.m >= t.m

SAT_PENDING:
  SELECT DISTINCT p.m AS m FROM pmonths p, thismonth t
  WHERE p.m >= t.m
    AND p.m NOT IN (SELECT b.m AS m FROM bad_months b)
"""

_ISC2B = """
constraint ISC2b mode monitor

VIEW p1prints:
  SELECT e.event_id AS event_id, DATE_OF(e.ts) AS day
  FROM Events e
  WHERE e.activity = 'print' AND e.lifecycle = 'complete'
    AND e.attribute = 'printer' AND e.value = 'Printer 1'

VIEW over10:
  SELECT g.day AS day
  FROM (SELECT p.day AS day, COUNT(*) AS n FROM p1prints p GROUP BY p.day) g
  WHERE g.n > 10

VIEW days:
  SELECT DISTINCT DATE_OF(l.ts) AS day FROM Log l

VIEW today:
  SELECT DISTINCT DATE_OF(n.now_ts) AS day FROM Now n

CASE:
  SELECT DISTINCT d.day AS day FROM days d

VIOL_PERM:
  SELECT DISTINCT o.day AS day FROM over10 o

# an eleventh print is already permanent, so nothing is pending-violating
VIOL_PENDING:
  SELECT DISTINCT d.day AS day FROM days d WHERE 0 = 1

SAT_PENDING:
  SELECT DISTINCT d.day AS day FROM days d, today t
  WHERE d.day >= t.day
    AND d.day NOT IN (SELECT o.day AS day FROM over10 o)
"""

_ISC3 = """
constraint ISC3 mode monitor

# Received orders must get a bill written after receipt and before the
# order's delivery; the bill's 'write bill' event names its order.

VIEW orders:
  SELECT l.case_id AS case_id, l.ts AS ts FROM Log l
  WHERE (l.activity = 'receive flyer' OR l.activity = 'receive poster')
    AND l.lifecycle = 'complete'

VIEW bills:
  SELECT e.value AS order_id, e.ts AS ts FROM Events e
  WHERE e.activity = 'write bill' AND e.lifecycle = 'complete'
    AND e.attribute = 'order'

VIEW delivered:
  SELECT l.case_id AS case_id, l.ts AS ts FROM Log l
  WHERE l.activity = 'deliver' AND l.lifecycle = 'complete'

VIEW billed_after:
  SELECT DISTINCT o.case_id AS case_id FROM orders o, bills b
  WHERE b.order_id = o.case_id AND b.ts > o.ts

VIEW timely_billed:
  SELECT DISTINCT o.case_id AS case_id FROM orders o, bills b, delivered d
  WHERE b.order_id = o.case_id AND d.case_id = o.case_id
    AND b.ts > o.ts AND b.ts < d.ts

CASE:
  SELECT DISTINCT o.case_id AS case_id FROM orders o

VIOL_PERM:
  SELECT DISTINCT o.case_id AS case_id FROM orders o
  WHERE EXISTS (SELECT d.ts AS ts FROM delivered d WHERE d.case_id = o.case_id)
    AND o.case_id NOT IN (SELECT t.case_id AS case_id FROM timely_billed t)

VIOL_PENDING:
  SELECT DISTINCT o.case_id AS case_id FROM orders o
  WHERE o.case_id NOT IN (SELECT ba.case_id AS case_id FROM billed_after ba)
    AND o.case_id NOT IN (SELECT d.case_id AS case_id FROM delivered d)

SAT_PENDING:
  SELECT DISTINCT ba.case_id AS case_id FROM billed_after ba
  WHERE ba.case_id NOT IN (SELECT d.case_id AS case_id FROM delivered d)
"""

_ISC4 = """
constraint ISC4 mode monitor

# Jobs of different paper formats must not run concurrently on one
# printer.  Jobs never span midnight here, so overlap is checked within
# the start day and a case is one (printer, day).

VIEW pstart:
  SELECT l.event_id AS event_id, l.ts AS ts, DATE_OF(l.ts) AS day,
         p.value AS printer, f.value AS fmt
  FROM Log l, EventData p, EventData f
  WHERE l.activity = 'print' AND l.lifecycle = 'start'
    AND p.event_id = l.event_id AND p.lifecycle = 'start' AND p.attribute = 'printer'
    AND f.event_id = l.event_id AND f.lifecycle = 'start' AND f.attribute = 'paper'

VIEW pend:
  SELECT l.event_id AS event_id, l.ts AS ts FROM Log l
  WHERE l.activity = 'print' AND l.lifecycle = 'complete'

VIEW pjobs:
  SELECT s.event_id AS event_id, s.printer AS printer, s.fmt AS fmt,
         s.day AS day, s.ts AS start_ts, e.ts AS end_ts
  FROM pstart s, pend e
  WHERE e.event_id = s.event_id

VIEW overlaps:
  SELECT DISTINCT a.printer AS printer, a.day AS day
  FROM pjobs a, pjobs b
  WHERE a.printer = b.printer AND a.day = b.day AND a.fmt <> b.fmt
    AND b.start_ts >= a.start_ts AND b.start_ts < a.end_ts

VIEW today:
  SELECT DISTINCT DATE_OF(n.now_ts) AS day FROM Now n

CASE:
  SELECT DISTINCT j.printer AS printer, j.day AS day FROM pjobs j

VIOL_PERM:
  SELECT DISTINCT o.printer AS printer, o.day AS day FROM overlaps o

# overlap is permanent the moment it is seen; nothing is pending-violating
VIOL_PENDING:
  SELECT DISTINCT j.printer AS printer, j.day AS day FROM pjobs j WHERE 0 = 1

SAT_PENDING:
  SELECT DISTINCT j.printer AS printer, j.day AS day FROM pjobs j, today t
  WHERE j.day >= t.day
    AND (j.printer, j.day) NOT IN
        (SELECT o.printer AS printer, o.day AS day FROM overlaps o)
"""


_ENTRIES: Tuple[CatalogEntry, ...] = (
    CatalogEntry(
        "same-car-day",
        "The same shipping car can be used for delivering packages at most "
        "seven times per day; one case per (car, day).",
        "postmortem",
        _SAME_CAR_DAY,
        PROSE_DERIVED,
        frozenset({"aggregation"}),
    ),
    CatalogEntry(
        "same-car-coarse",
        "The same shipping car can be used for delivering packages at most "
        "seven times per day; one case per car.",
        "postmortem",
        _SAME_CAR_COARSE,
        PROSE_DERIVED,
        frozenset({"aggregation"}),
    ),
    CatalogEntry(
        "same-car-fine",
        "The same shipping car can be used for delivering packages at most "
        "seven times per day; one case per (car, day, delivery count).",
        "postmortem",
        _SAME_CAR_FINE,
        PROSE_DERIVED,
        frozenset({"aggregation"}),
    ),
    CatalogEntry(
        "avg-shipping",
        "The average time for a package to be delivered after purchase is "
        "between two and five days; one case per package.",
        "postmortem",
        _AVG_SHIPPING,
        PROSE_DERIVED,
        frozenset({"aggregation", "or"}),
    ),
    CatalogEntry(
        "followed-by-20h",
        "Every instance of activity a must be followed by an instance of "
        "activity b within 20 hours; activity c ends the trace.",
        "monitor",
        _FOLLOWED_BY,
        PROSE_DERIVED,
        frozenset({"negation", "double-negation"}),
    ),
    CatalogEntry(
        "same-car-monitor",
        "Monitoring variant of the same-car constraint on the (car, day) "
        "scope; the pending-violating query is empty by construction.",
        "monitor",
        _SAME_CAR_MONITOR,
        PROSE_DERIVED,
        frozenset({"aggregation", "negation"}),
    ),
    CatalogEntry(
        "ISC1",
        "There is exactly one delivery activity per day in which all the "
        "finished orders/bills of that day so far are delivered to the post "
        "office simultaneously.",
        "monitor",
        _ISC1,
        PROSE_DERIVED,
        frozenset({"existence", "negation", "double-negation"}),
    ),
    CatalogEntry(
        "ISC2a",
        "All print jobs must be completed within 10 minutes in at least 95% "
        "of all cases per month.",
        "monitor",
        _ISC2A,
        PROSE_DERIVED,
        frozenset({"aggregation", "existence", "negation"}),
    ),
    CatalogEntry(
        "ISC2b",
        "Printer 1 may only print 10 times per day.",
        "monitor",
        _ISC2B,
        PROSE_DERIVED,
        frozenset({"aggregation", "negation"}),
    ),
    CatalogEntry(
        "ISC3",
        "If a flyer or poster order is received, a bill process is started "
        "afterwards, and before the order is delivered.",
        "monitor",
        _ISC3,
        PROSE_DERIVED,
        frozenset({"or", "existence", "negation"}),
    ),
    CatalogEntry(
        "ISC4",
        "Print jobs that require different paper formats cannot run "
        "concurrently on one printer (one starts before the other finishes).",
        "monitor",
        _ISC4,
        PROSE_DERIVED,
        frozenset({"negation"}),
    ),
)


def catalog_entries() -> Tuple[CatalogEntry, ...]:
    return _ENTRIES


def catalog_lookup(name: str) -> CatalogEntry:
    for entry in _ENTRIES:
        if entry.name == name:
            return entry
    hint = get_close_matches(name, [e.name for e in _ENTRIES], n=1)
    extra = "; did you mean %r" % hint[0] if hint else ""
    raise CatalogLookupError("no catalog constraint named %r%s" % (name, extra))
