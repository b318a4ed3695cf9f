"""Incremental maintenance of decorrelated query plans.

Every operator keeps its output materialized as a bag (tuple -> positive
multiplicity) plus whatever auxiliary state it needs (join indexes, match
support counters, aggregate accumulators).  A batch of signed base deltas
enters at the scan leaves and is pushed through in topological order; each
node turns input deltas into a consolidated output delta, so multiplicity
changes that cancel out (say, the event clock moving within the same day
after projection to day granularity) die right there instead of waking the
rest of the graph.

Structurally identical subtrees -- ignoring table aliases, which carry no
meaning after typechecking -- are built once and shared, including across
the member queries of one constraint.
"""
from __future__ import annotations

from bisect import bisect_left, insort
from decimal import Decimal
from typing import Dict, List, Optional, Tuple

from ..lang import ir
from ..relational import Database
from .exprs import compile_expr

Bag = Dict[Tuple, int]


class PlanError(Exception):
    """An internal invariant broke (negative multiplicity or support)."""


def _add(acc: Bag, t: tuple, m: int):
    n = acc.get(t, 0) + m
    if n:
        acc[t] = n
    elif t in acc:
        del acc[t]


def _prune(d: Bag) -> Bag:
    return {t: m for t, m in d.items() if m}


def _shift_cols(e: ir.Expr, delta: int) -> ir.Expr:
    """Rebind column indexes (not levels) by delta; for join-side splits."""
    if isinstance(e, ir.Col):
        lv, idx, kind = e.bound()
        return ir.Col(e.qualifier, e.name, (lv, idx + delta, kind))
    if isinstance(e, ir.Lit):
        return e
    if isinstance(e, ir.Arith):
        return ir.Arith(e.op, _shift_cols(e.left, delta), _shift_cols(e.right, delta))
    if isinstance(e, ir.Neg):
        return ir.Neg(_shift_cols(e.operand, delta))
    if isinstance(e, ir.Cmp):
        return ir.Cmp(e.op, _shift_cols(e.left, delta), _shift_cols(e.right, delta))
    if isinstance(e, ir.And):
        return ir.And(_shift_cols(e.left, delta), _shift_cols(e.right, delta))
    if isinstance(e, ir.Or):
        return ir.Or(_shift_cols(e.left, delta), _shift_cols(e.right, delta))
    if isinstance(e, ir.Not):
        return ir.Not(_shift_cols(e.operand, delta))
    if isinstance(e, ir.ExtractField):
        return ir.ExtractField(e.field, _shift_cols(e.operand, delta))
    if isinstance(e, ir.MinutesBetween):
        return ir.MinutesBetween(_shift_cols(e.start, delta), _shift_cols(e.end, delta))
    if isinstance(e, ir.TruncTs):
        return ir.TruncTs(e.unit, _shift_cols(e.operand, delta))
    raise PlanError("cannot rebind %r" % (e,))


def _cols_of(e: ir.Expr):
    return [x for x in ir.walk_exprs(e) if isinstance(x, ir.Col)]


# --------------------------------------------------------------- operators


class _Node:
    ports = 1

    def __init__(self, width: int, label: str):
        self.out: Bag = {}
        self.consumers: List[Tuple["_Node", int]] = []
        self.width = width
        self.label = label

    def on_batch(self, dins: List[Bag]) -> Bag:
        raise NotImplementedError

    def apply_out(self, delta: Bag):
        out = self.out
        for t, m in delta.items():
            n = out.get(t, 0) + m
            if n > 0:
                out[t] = n
            elif n == 0:
                del out[t]
            else:
                raise PlanError("%s: multiplicity below zero for %r" % (self.label, t))

    def state_size(self) -> int:
        """Distinct tuples held, including auxiliary structures."""
        return len(self.out)


class _ScanNode(_Node):
    def on_batch(self, dins):
        return _prune(dins[0])


class _FilterNode(_Node):
    def __init__(self, width, label, pred):
        super().__init__(width, label)
        self.pred = pred

    def on_batch(self, dins):
        pred = self.pred
        return {t: m for t, m in dins[0].items() if m and pred(t, ()) is True}


class _ProjectNode(_Node):
    def __init__(self, width, label, fns):
        super().__init__(width, label)
        self.fns = fns

    def on_batch(self, dins):
        fns = self.fns
        out: Bag = {}
        for t, m in dins[0].items():
            if m:
                _add(out, tuple(f(t, ()) for f in fns), m)
        return out


class _UnionNode(_Node):
    ports = 2

    def on_batch(self, dins):
        out: Bag = {}
        for d in dins:
            for t, m in d.items():
                _add(out, t, m)
        return out


class _DistinctNode(_Node):
    def __init__(self, width, label):
        super().__init__(width, label)
        self.support: Bag = {}

    def on_batch(self, dins):
        out: Bag = {}
        for t, m in dins[0].items():
            if not m:
                continue
            old = self.support.get(t, 0)
            new = old + m
            if new < 0:
                raise PlanError("%s: support below zero" % self.label)
            if new:
                self.support[t] = new
            else:
                del self.support[t]
            if old == 0 and new > 0:
                _add(out, t, 1)
            elif old > 0 and new == 0:
                _add(out, t, -1)
        return out

    def state_size(self):
        return len(self.support)


class _JoinNode(_Node):
    ports = 2

    def __init__(self, width, label, lwidth, lkeys, rkeys, residual):
        super().__init__(width, label)
        self.lwidth = lwidth
        self.lkeys = lkeys  # closures over the left row
        self.rkeys = rkeys  # closures over the right row
        self.residual = residual  # closure over the combined row, or None
        self.lindex: Dict[Tuple, Bag] = {}
        self.rindex: Dict[Tuple, Bag] = {}

    def _key(self, fns, t):
        k = tuple(f(t, ()) for f in fns)
        return None if None in k else k

    def _emit(self, out, lt, lm, rt, rm):
        row = lt + rt
        if self.residual is None or self.residual(row, ()) is True:
            _add(out, row, lm * rm)

    def on_batch(self, dins):
        dl, dr = dins
        out: Bag = {}
        # deltas against the old opposite side, then delta x delta
        for lt, lm in dl.items():
            if not lm:
                continue
            k = self._key(self.lkeys, lt)
            if k is None:
                continue
            for rt, rm in self.rindex.get(k, {}).items():
                self._emit(out, lt, lm, rt, rm)
        for rt, rm in dr.items():
            if not rm:
                continue
            k = self._key(self.rkeys, rt)
            if k is None:
                continue
            for lt, lm in self.lindex.get(k, {}).items():
                self._emit(out, lt, lm, rt, rm)
        if dl and dr:
            for lt, lm in dl.items():
                if not lm:
                    continue
                k = self._key(self.lkeys, lt)
                if k is None:
                    continue
                for rt, rm in dr.items():
                    if rm and self._key(self.rkeys, rt) == k:
                        self._emit(out, lt, lm, rt, rm)
        self._update(self.lindex, self.lkeys, dl)
        self._update(self.rindex, self.rkeys, dr)
        return out

    def _update(self, index, fns, delta):
        for t, m in delta.items():
            if not m:
                continue
            k = self._key(fns, t)
            if k is None:
                continue
            bucket = index.setdefault(k, {})
            n = bucket.get(t, 0) + m
            if n > 0:
                bucket[t] = n
            elif n == 0:
                del bucket[t]
                if not bucket:
                    del index[k]
            else:
                raise PlanError("%s: index multiplicity below zero" % self.label)

    def state_size(self):
        return len(self.out) + sum(len(b) for b in self.lindex.values()) + sum(
            len(b) for b in self.rindex.values()
        )


class _MatchNode(_Node):
    """Semi- or anti-join: probe rows filtered by build-side key support.

    Support counts never go negative; a probe row whose key's support
    falls back to zero is re-emitted (anti) or retracted (semi), which is
    how internal deletions propagate out of negation.
    """

    ports = 2

    def __init__(self, width, label, pkeys, bkeys, anti: bool):
        super().__init__(width, label)
        self.pkeys = pkeys
        self.bkeys = bkeys
        self.anti = anti
        self.pindex: Dict[Tuple, Bag] = {}
        self.support: Dict[Tuple, int] = {}

    def on_batch(self, dins):
        dp, db = dins
        anti = self.anti
        out: Bag = {}
        for pt, pm in dp.items():
            if not pm:
                continue
            k = tuple(f(pt, ()) for f in self.pkeys)
            if None in k:
                # can never match: passes an anti-join, never a semi-join
                if anti:
                    _add(out, pt, pm)
                continue
            bucket = self.pindex.setdefault(k, {})
            n = bucket.get(pt, 0) + pm
            if n > 0:
                bucket[pt] = n
            elif n == 0:
                del bucket[pt]
                if not bucket:
                    del self.pindex[k]
            else:
                raise PlanError("%s: probe multiplicity below zero" % self.label)
            matched = self.support.get(k, 0) > 0
            if matched != anti:
                _add(out, pt, pm)
        for bt, bm in db.items():
            if not bm:
                continue
            k = tuple(f(bt, ()) for f in self.bkeys)
            if None in k:
                continue
            old = self.support.get(k, 0)
            new = old + bm
            if new < 0:
                raise PlanError("%s: support below zero for key %r" % (self.label, k))
            if new:
                self.support[k] = new
            else:
                del self.support[k]
            if (old > 0) == (new > 0):
                continue
            sign = 1 if ((new > 0) != anti) else -1
            for pt, pm in self.pindex.get(k, {}).items():
                _add(out, pt, sign * pm)
        return out

    def state_size(self):
        return len(self.out) + len(self.support) + sum(
            len(b) for b in self.pindex.values()
        )


class _CountStar:
    __slots__ = ("n",)

    def __init__(self):
        self.n = 0

    def update(self, t, m, fn):
        self.n += m

    def value(self):
        return self.n


class _CountVal:
    __slots__ = ("n",)

    def __init__(self):
        self.n = 0

    def update(self, t, m, fn):
        if fn(t, ()) is not None:
            self.n += m

    def value(self):
        return self.n


class _CountDistinct:
    __slots__ = ("counts",)

    def __init__(self):
        self.counts: dict = {}

    def update(self, t, m, fn):
        v = fn(t, ())
        if v is None:
            return
        n = self.counts.get(v, 0) + m
        if n > 0:
            self.counts[v] = n
        elif n == 0:
            del self.counts[v]
        else:
            raise PlanError("distinct count below zero")

    def value(self):
        return len(self.counts)


class _SumAvg:
    __slots__ = ("total", "n", "avg")

    def __init__(self, avg: bool):
        self.total = 0
        self.n = 0
        self.avg = avg

    def update(self, t, m, fn):
        v = fn(t, ())
        if v is None:
            return
        self.total += v * m
        self.n += m

    def value(self):
        if self.n == 0:
            return None
        if self.avg:
            return Decimal(self.total) / Decimal(self.n)
        return self.total


class _MinMax:
    __slots__ = ("counts", "ordered", "is_min")

    def __init__(self, is_min: bool):
        self.counts: dict = {}
        self.ordered: list = []
        self.is_min = is_min

    def update(self, t, m, fn):
        v = fn(t, ())
        if v is None:
            return
        n = self.counts.get(v, 0) + m
        if n > 0:
            if v not in self.counts:
                insort(self.ordered, v)
            self.counts[v] = n
        elif n == 0:
            del self.counts[v]
            i = bisect_left(self.ordered, v)
            del self.ordered[i]
        else:
            raise PlanError("min/max support below zero")

    def value(self):
        if not self.ordered:
            return None
        return self.ordered[0] if self.is_min else self.ordered[-1]


def _make_acc(agg: ir.Agg):
    if agg.operand is None:
        return _CountStar()
    if agg.func == "count":
        return _CountDistinct() if agg.distinct else _CountVal()
    if agg.func == "sum":
        return _SumAvg(avg=False)
    if agg.func == "avg":
        return _SumAvg(avg=True)
    if agg.func == "min":
        return _MinMax(is_min=True)
    return _MinMax(is_min=False)


class _GroupState:
    __slots__ = ("total", "accs", "row")

    def __init__(self, aggs):
        self.total = 0
        self.accs = [_make_acc(a) for _, a in aggs]
        self.row: Optional[tuple] = None


class _GroupNode(_Node):
    """Grouped aggregation; with no group keys an empty input yields an
    empty result rather than a single all-empty row."""

    def __init__(self, width, label, gfns, aggs, agg_fns):
        super().__init__(width, label)
        self.gfns = gfns
        self.aggs = aggs
        self.agg_fns = agg_fns
        self.state: Dict[Tuple, _GroupState] = {}

    def on_batch(self, dins):
        per_group: Dict[Tuple, Bag] = {}
        for t, m in dins[0].items():
            if not m:
                continue
            k = tuple(f(t, ()) for f in self.gfns)
            _add(per_group.setdefault(k, {}), t, m)
        out: Bag = {}
        for k, rows in per_group.items():
            st = self.state.get(k)
            if st is None:
                st = self.state[k] = _GroupState(self.aggs)
            old_row = st.row
            for t, m in rows.items():
                st.total += m
                for acc, fn in zip(st.accs, self.agg_fns):
                    acc.update(t, m, fn)
            if st.total < 0:
                raise PlanError("%s: group below zero" % self.label)
            if st.total == 0:
                new_row = None
                del self.state[k]
            else:
                new_row = k + tuple(acc.value() for acc in st.accs)
                st.row = new_row
            if old_row == new_row:
                continue
            if old_row is not None:
                _add(out, old_row, -1)
            if new_row is not None:
                _add(out, new_row, 1)
        return out

    def state_size(self):
        return len(self.out) + len(self.state)


# ------------------------------------------------------------ compilation


def _normalize(node: ir.Rel):
    """Alias-free structural key; aliases mean nothing once columns are
    bound positionally, so scans and views dedup across member queries."""
    if isinstance(node, ir.Scan):
        return ir.Scan(node.relation, None)
    if isinstance(node, ir.Derived):
        return ("derived", _normalize(node.query))
    if isinstance(node, ir.Join):
        return ("join", _normalize(node.left), _normalize(node.right), node.on)
    if isinstance(node, ir.Filter):
        return ("filter", _normalize(node.child), node.predicate)
    if isinstance(node, ir.Project):
        return ("project", _normalize(node.child), node.items)
    if isinstance(node, ir.GroupAgg):
        return ("group", _normalize(node.child), node.groups, node.aggs)
    if isinstance(node, ir.Distinct):
        return ("distinct", _normalize(node.child))
    if isinstance(node, ir.UnionAll):
        return ("union", _normalize(node.left), _normalize(node.right))
    if isinstance(node, (ir.SemiJoin, ir.AntiJoin)):
        tag = "anti" if isinstance(node, ir.AntiJoin) else "semi"
        return (tag, _normalize(node.probe), _normalize(node.build), node.keys)
    raise PlanError("cannot compile %s" % type(node).__name__)


class Plan:
    """A multi-rooted dataflow over one database's base relations."""

    def __init__(self, db: Database):
        self.db = db
        self.order: List[_Node] = []
        self.leaves: Dict[str, _ScanNode] = {}
        self.roots: Dict[str, _Node] = {}
        self._memo: dict = {}
        self._loaded = False

    # -- building

    def add_root(self, name: str, tree: ir.Rel):
        if self._loaded:
            raise PlanError("cannot add roots to a loaded plan")
        if name in self.roots:
            raise PlanError("duplicate root %r" % name)
        self.roots[name] = self._build(tree)

    def _attach(self, child: _Node, parent: _Node, port: int):
        child.consumers.append((parent, port))

    def _build(self, node: ir.Rel) -> _Node:
        key = _normalize(node)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        built = self._construct(node)
        self._memo[key] = built
        return built

    def _construct(self, node: ir.Rel) -> _Node:
        if isinstance(node, ir.Scan):
            rel = self.db.relation(node.relation)  # validates the name
            n = self.leaves.get(node.relation)
            if n is None:
                n = _ScanNode(len(rel.schema), node.relation)
                self.leaves[node.relation] = n
                self.order.append(n)
            return n
        if isinstance(node, ir.Derived):
            return self._build(node.query)
        if isinstance(node, ir.Filter):
            child = self._build(node.child)
            n = _FilterNode(child.width, "filter", compile_expr(node.predicate))
            self._attach(child, n, 0)
            self.order.append(n)
            return n
        if isinstance(node, ir.Project):
            child = self._build(node.child)
            if node.items is ir.STAR:
                return child
            fns = [compile_expr(e) for _, e in node.items]
            n = _ProjectNode(len(node.items), "project", fns)
            self._attach(child, n, 0)
            self.order.append(n)
            return n
        if isinstance(node, ir.Join):
            return self._construct_join(node)
        if isinstance(node, ir.GroupAgg):
            child = self._build(node.child)
            gfns = [compile_expr(g) for _, g in node.groups]
            agg_fns = [
                compile_expr(a.operand) if a.operand is not None else None
                for _, a in node.aggs
            ]
            n = _GroupNode(
                len(node.groups) + len(node.aggs), "group", gfns, node.aggs, agg_fns
            )
            self._attach(child, n, 0)
            self.order.append(n)
            return n
        if isinstance(node, ir.Distinct):
            child = self._build(node.child)
            n = _DistinctNode(child.width, "distinct")
            self._attach(child, n, 0)
            self.order.append(n)
            return n
        if isinstance(node, ir.UnionAll):
            left = self._build(node.left)
            right = self._build(node.right)
            n = _UnionNode(left.width, "union")
            self._attach(left, n, 0)
            self._attach(right, n, 1)
            self.order.append(n)
            return n
        if isinstance(node, (ir.SemiJoin, ir.AntiJoin)):
            probe = self._build(node.probe)
            build = self._build(node.build)
            anti = isinstance(node, ir.AntiJoin)
            pkeys = [compile_expr(pe) for pe, _ in node.keys]
            bkeys = [compile_expr(be) for _, be in node.keys]
            n = _MatchNode(probe.width, "anti" if anti else "semi", pkeys, bkeys, anti)
            self._attach(probe, n, 0)
            self._attach(build, n, 1)
            self.order.append(n)
            return n
        raise PlanError("cannot compile %s" % type(node).__name__)

    def _construct_join(self, node: ir.Join) -> _Node:
        left = self._build(node.left)
        right = self._build(node.right)
        lwidth = left.width
        lexprs, rexprs, residual = [], [], []
        conjuncts = ir.split_conjuncts(node.on) if node.on is not None else []
        for c in conjuncts:
            pair = None
            if isinstance(c, ir.Cmp) and c.op == "=":
                a_idx = [col.bound()[1] for col in _cols_of(c.left)]
                b_idx = [col.bound()[1] for col in _cols_of(c.right)]
                if a_idx and b_idx:
                    a_left = all(i < lwidth for i in a_idx)
                    a_right = all(i >= lwidth for i in a_idx)
                    b_left = all(i < lwidth for i in b_idx)
                    b_right = all(i >= lwidth for i in b_idx)
                    if a_left and b_right:
                        pair = (c.left, _shift_cols(c.right, -lwidth))
                    elif b_left and a_right:
                        pair = (c.right, _shift_cols(c.left, -lwidth))
            if pair is None:
                residual.append(c)
            else:
                lexprs.append(pair[0])
                rexprs.append(pair[1])
        res_fn = None
        if residual:
            res_fn = compile_expr(ir.conjoin(residual))
        n = _JoinNode(
            lwidth + right.width,
            "join",
            lwidth,
            [compile_expr(e) for e in lexprs],
            [compile_expr(e) for e in rexprs],
            res_fn,
        )
        self._attach(left, n, 0)
        self._attach(right, n, 1)
        self.order.append(n)
        return n

    # -- running

    def load(self):
        """Bring a freshly built plan up to date with the database."""
        self._loaded = True
        deltas = []
        for name in self.leaves:
            for t, m in self.db.relation(name).rows.items():
                deltas.append((name, t, m))
        self.apply(deltas)

    def apply(self, base_deltas) -> Dict[str, Bag]:
        """Push signed base deltas through; returns per-root output deltas."""
        pending: Dict[int, List[Bag]] = {}
        index: Dict[int, _Node] = {}

        def enqueue(n: _Node, port: int, delta: Bag):
            slot = pending.get(id(n))
            if slot is None:
                slot = pending[id(n)] = [dict() for _ in range(n.ports)]
                index[id(n)] = n
            tgt = slot[port]
            for t, m in delta.items():
                _add(tgt, t, m)

        for rel, t, m in base_deltas:
            leaf = self.leaves.get(rel)
            if leaf is not None:
                enqueue(leaf, 0, {t: m})

        root_ids: Dict[int, List[str]] = {}
        for name, n in self.roots.items():
            root_ids.setdefault(id(n), []).append(name)
        changed: Dict[str, Bag] = {}
        for node in self.order:
            slot = pending.pop(id(node), None)
            if slot is None:
                continue
            dout = node.on_batch(slot)
            dout = _prune(dout)
            if not dout:
                continue
            node.apply_out(dout)
            for name in root_ids.get(id(node), ()):
                acc = changed.setdefault(name, {})
                for t, m in dout.items():
                    _add(acc, t, m)
            for consumer, port in node.consumers:
                enqueue(consumer, port, dout)
        return {k: v for k, v in changed.items() if v}

    def result(self, name: str) -> Bag:
        """Live view of a root's materialized result (do not mutate)."""
        return self.roots[name].out

    def sizes(self) -> Dict[str, int]:
        return {name: len(n.out) for name, n in self.roots.items()}

    def state_size(self) -> int:
        return sum(n.state_size() for n in self.order)


def compile_plan(named_roots, db: Database) -> Plan:
    """Build and load a plan for {name: decorrelated tree}."""
    plan = Plan(db)
    for name, tree in named_roots.items():
        plan.add_root(name, tree)
    plan.load()
    return plan
