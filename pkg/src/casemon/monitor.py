"""Case-state tracking over live insertion streams.

Every registered constraint gets its own maintenance plan and its own
:class:`CaseLedger`.  After each insertion the monitor re-grades exactly
the case keys touched by some member-query delta, applies the state
machine below, and records the transition::

                 +--------------+
        +------> |  PendingSat  | <------+
        |        +--------------+        |
    NotACase        ^        |        PermSat   (latched)
        |           v        v           ^
        |        +--------------+        |
        +------> | PendingViol  | -------+---> PermViol  (latched)
                 +--------------+

New cases may enter at any state; an unlatched case may also cease to be
a case.  Permanent states latch: once a case is graded permanent, later
query output that contradicts the latched state is reported as a
diagnostic and otherwise ignored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .engine import Plan, compile_plan, evaluate
from .ensemble import MONITOR, POSTMORTEM, ConstraintEnsemble
from .events import InsertionDelta
from .relational import Database, StoreError
from .values import Ts, render_value

PENDING_SAT = "PendingSat"
PENDING_VIOL = "PendingViol"
PERM_SAT = "PermSat"
PERM_VIOL = "PermViol"
NOT_A_CASE = "NotACase"

STATES = (PENDING_SAT, PENDING_VIOL, PERM_SAT, PERM_VIOL, NOT_A_CASE)

WARNING = "warning"
BREACH = "contract-breach"

#: classification priority; earlier entries win when queries overlap
_MINOR_STATE = (
    ("viol_perm", PERM_VIOL),
    ("viol_pending", PENDING_VIOL),
    ("sat_pending", PENDING_SAT),
)


class MonitorError(Exception):
    """Registration-time misuse; runtime anomalies become Diagnostics."""


@dataclass(frozen=True)
class Diagnostic:
    sequence_no: int
    severity: str  # "warning" | "contract-breach"
    constraint: str
    case_key: Optional[tuple]
    description: str


@dataclass(frozen=True)
class StateChange:
    sequence_no: int
    constraint: str
    case_key: tuple
    old: str
    new: str


def render_case_key(key: Optional[tuple]) -> str:
    """Stable text form of a case key for reports ('|'-joined columns)."""
    if key is None:
        return ""
    return "|".join(render_value(v) for v in key)


@dataclass
class CaseRecord:
    state: str = NOT_A_CASE
    latched: bool = False
    history: List[Tuple[int, str, str]] = field(default_factory=list)


class CaseLedger:
    """Per-constraint record of every case key ever graded."""

    def __init__(self):
        self.records: Dict[tuple, CaseRecord] = {}

    def record(self, key: tuple) -> CaseRecord:
        rec = self.records.get(key)
        if rec is None:
            rec = self.records[key] = CaseRecord()
        return rec

    def state(self, key: tuple) -> str:
        rec = self.records.get(key)
        return rec.state if rec is not None else NOT_A_CASE

    def states(self) -> Dict[tuple, str]:
        return {k: r.state for k, r in self.records.items()}


@dataclass
class Handle:
    ensemble: ConstraintEnsemble
    plan: Plan
    ledger: CaseLedger


@dataclass
class Snapshot:
    """A consistent cut: sizes and ledger states at one sequence_no."""

    sequence_no: int
    sizes: Dict[str, Dict[str, int]]  # constraint -> member query -> size
    states: Dict[str, Dict[tuple, str]]  # constraint -> case key -> state
    diagnostics: List[Diagnostic]  # contract findings at this cut


class Monitor:
    def __init__(self, db: Optional[Database] = None):
        self.db = db if db is not None else Database()
        self.handles: Dict[str, Handle] = {}
        self.sequence_no = 0
        self.state_changes: List[StateChange] = []
        self.diagnostics: List[Diagnostic] = []

    # -- registration

    def register(self, ensemble: ConstraintEnsemble) -> Handle:
        if ensemble.mode != MONITOR:
            raise MonitorError(
                "constraint %r has mode %s; live tracking needs the four "
                "monitor queries" % (ensemble.name, ensemble.mode)
            )
        if ensemble.name in self.handles:
            raise MonitorError("constraint %r already registered" % ensemble.name)
        plan = compile_plan(ensemble.roots, self.db)
        handle = Handle(ensemble, plan, CaseLedger())
        self.handles[ensemble.name] = handle
        # grade whatever the database already holds
        current = {m: plan.result(m) for m in ensemble.member_names}
        self._reclassify(handle, self._affected(handle, current))
        return handle

    # -- the insertion loop

    def ingest(self, delta: InsertionDelta):
        """Apply one insertion; returns (state changes, diagnostics)."""
        diags: List[Diagnostic] = []
        if delta.sequence_no <= self.sequence_no:
            diags.append(
                self._diag(
                    WARNING,
                    "",
                    None,
                    "out-of-order delta %d after %d"
                    % (delta.sequence_no, self.sequence_no),
                )
            )
        else:
            self.sequence_no = delta.sequence_no
        try:
            base = self.db.insert(delta.target, delta.tup)
        except StoreError as err:
            diags.append(self._diag(WARNING, "", None, str(err)))
            return [], diags
        changes, more = self._propagate(base)
        return changes, diags + more

    def advance_clock(self, ts: Ts):
        """Move the event clock without inserting; for synthetic ticks."""
        base = self.db.advance_now(ts)
        if not base:
            return [], []
        return self._propagate(base)

    def _propagate(self, base):
        changes: List[StateChange] = []
        diags: List[Diagnostic] = []
        for handle in self.handles.values():
            deltas = handle.plan.apply(base)
            c, d = self._reclassify(handle, self._affected(handle, deltas))
            changes.extend(c)
            diags.extend(d)
        return changes, diags

    def _affected(self, handle: Handle, per_member) -> List[tuple]:
        seen: Dict[tuple, None] = {}
        for member in handle.ensemble.member_names:
            for key in per_member.get(member, ()):
                seen.setdefault(key, None)
        return list(seen)

    # -- grading and the state machine

    def _grade(self, handle: Handle, key: tuple):
        """Current state for a key, plus a breach description if any."""
        plan = handle.plan
        in_case = key in plan.result("case")
        minors = [m for m, _ in _MINOR_STATE if key in plan.result(m)]
        if minors:
            state = dict(_MINOR_STATE)[minors[0]]
        elif in_case:
            state = PERM_SAT
        else:
            state = NOT_A_CASE
        problems = []
        if len(minors) > 1:
            problems.append("disjointness breach: key in %s" % " and ".join(minors))
        if minors and not in_case:
            problems.append("subset breach: %s key missing from case" % minors[0])
        return state, "; ".join(problems) or None

    def classify(self, constraint: str, key: tuple) -> str:
        return self._grade(self.handles[constraint], key)[0]

    def _reclassify(self, handle: Handle, keys):
        changes: List[StateChange] = []
        diags: List[Diagnostic] = []
        name = handle.ensemble.name
        for key in keys:
            new, breach = self._grade(handle, key)
            if breach is not None:
                diags.append(self._diag(BREACH, name, key, breach))
            old = handle.ledger.state(key)
            if new == old:
                continue
            rec = handle.ledger.record(key)
            if rec.latched:
                # the latched state wins; make the contradiction visible
                if new == NOT_A_CASE:
                    diags.append(
                        self._diag(
                            WARNING,
                            name,
                            key,
                            "latched %s case left every member query "
                            "(tombstone)" % old,
                        )
                    )
                else:
                    diags.append(
                        self._diag(
                            BREACH,
                            name,
                            key,
                            "queries grade latched %s case as %s; latched "
                            "state wins" % (old, new),
                        )
                    )
                continue
            rec.state = new
            if new in (PERM_SAT, PERM_VIOL):
                rec.latched = True
            rec.history.append((self.sequence_no, old, new))
            changes.append(StateChange(self.sequence_no, name, key, old, new))
        self.state_changes.extend(changes)
        self.diagnostics.extend(diags)
        return changes, diags

    def _diag(self, severity, constraint, key, description) -> Diagnostic:
        return Diagnostic(self.sequence_no, severity, constraint, key, description)

    # -- snapshots

    def snapshot(self) -> Snapshot:
        sizes: Dict[str, Dict[str, int]] = {}
        states: Dict[str, Dict[tuple, str]] = {}
        diags: List[Diagnostic] = []
        for name, handle in self.handles.items():
            sizes[name] = {
                m: len(handle.plan.result(m)) for m in handle.ensemble.member_names
            }
            states[name] = handle.ledger.states()
            diags.extend(self._contract_check(handle))
        self.diagnostics.extend(diags)
        return Snapshot(self.sequence_no, sizes, states, diags)

    def _contract_check(self, handle: Handle) -> List[Diagnostic]:
        name = handle.ensemble.name
        plan = handle.plan
        case = plan.result("case")
        out = []
        minors = [m for m, _ in _MINOR_STATE]
        for m in minors:
            for key in plan.result(m):
                if key not in case:
                    out.append(
                        self._diag(
                            BREACH, name, key, "subset breach: %s key missing from case" % m
                        )
                    )
        for i, a in enumerate(minors):
            for b in minors[i + 1:]:
                small, big = plan.result(a), plan.result(b)
                if len(big) < len(small):
                    small, big = big, small
                for key in small:
                    if key in big:
                        out.append(
                            self._diag(
                                BREACH,
                                name,
                                key,
                                "disjointness breach: key in both %s and %s" % (a, b),
                            )
                        )
        return out


# -- one-shot grading of finished logs

@dataclass
class PostMortemResult:
    satisfying: set
    violating: set
    diagnostics: List[Diagnostic]


def post_mortem_check(db: Database, ensemble: ConstraintEnsemble) -> PostMortemResult:
    """Partition case keys of a finished log into satisfying/violating.

    The caller owns completeness: grading a log whose cases are still
    running simply grades the prefix.  Keys returned by the violation
    query but not by the case query break the ensemble's contract and
    are reported as diagnostics (they stay in ``violating``).
    """
    if ensemble.mode != POSTMORTEM:
        raise MonitorError(
            "constraint %r has mode %s; one-shot grading needs a "
            "postmortem ensemble" % (ensemble.name, ensemble.mode)
        )
    violating = set(evaluate(ensemble.roots["viol"], db))
    cases = set(evaluate(ensemble.roots["case"], db))
    diagnostics = [
        Diagnostic(
            0,
            BREACH,
            ensemble.name,
            key,
            "subset breach: violating key missing from case",
        )
        for key in sorted(violating - cases, key=render_case_key)
    ]
    return PostMortemResult(cases - violating, violating, diagnostics)
