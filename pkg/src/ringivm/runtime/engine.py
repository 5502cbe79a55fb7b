"""Engine state and trigger execution."""

from __future__ import annotations

import threading
from collections.abc import Iterable, Mapping
from contextlib import contextmanager
from dataclasses import dataclass

from ringivm.core.relation import Relation, join_aggregate, product, rename
from ringivm.core.ring import CountingRing, OpCounters
from ringivm.errors import (
    CounterUnderflow, MissingRelation, NotUpdatable, SchemaMismatch, UnknownRelation,
)
from ringivm.planner.delta import DeltaTree, check_shape
from ringivm.planner.plan import Plan
from ringivm.planner.viewtree import INDICATOR, LEAF, compute_node, evaluate_tree
from ringivm.runtime.indicators import IndicatorCounter
from ringivm.runtime.storage import Journal, StoredRelation
from ringivm.runtime.updates import UpdateDelta


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


@dataclass
class BatchSummary:
    updates: int
    tuples: int
    root_changed: bool


class Engine:
    """Materialized views of a plan, kept current under updates.

    ``database`` maps source relation names to relations. Views, base
    relations and indicators live in :class:`StoredRelation` objects keyed by
    node id (base relations by occurrence name).
    """

    def __init__(self, plan: Plan, database: Mapping[str, Relation], strict_deletes: bool = False,
                 counters: OpCounters | None = None):
        self.plan = plan
        self.tree = plan.tree
        self.ring = plan.ring
        self.counters = counters or OpCounters()
        self.cring = CountingRing(self.ring, self.counters)
        self.strict_deletes = strict_deletes
        self.lock = RWLock()
        self.stores: dict[str, StoredRelation] = {}
        self.indicator_counters: dict[str, IndicatorCounter] = {}
        self.initialize(database)

    # -- setup -----------------------------------------------------------
    def _occurrence_data(self, database: Mapping[str, Relation]) -> dict[str, Relation]:
        q = self.plan.query
        out = {}
        for src, schema in q.sources().items():
            if src not in database:
                raise MissingRelation(f"database has no relation {src!r}")
            rel = database[src]
            if rel.schema != schema:
                raise SchemaMismatch(f"relation {src!r} has schema {rel.schema!r}, query expects {schema!r}")
            for occ in q.occurrences(src):
                m = occ.rename_map()
                out[occ.name] = rename(rel, m) if m else rel
        return out

    def initialize(self, database: Mapping[str, Relation]) -> None:
        """Load base relations, compute stored views bottom-up and build counters."""
        with self.lock.write():
            occ = self._occurrence_data(database)
            values = evaluate_tree(self.tree, occ, self.ring)
            self.stores = {}
            for n in self.tree.root.walk():
                if n.kind == LEAF or n.kind == INDICATOR or n.id in self.plan.materialized:
                    self.stores[n.id] = StoredRelation(n.schema, self.ring, values[n.id])
            self.indicator_counters = {}
            for ind in self.tree.indicators.values():
                c = IndicatorCounter(ind.id, ind.relation, self.tree.leaves[ind.relation].schema,
                                     ind.keys, self.ring)
                c.build(self.stores[ind.relation]._data)
                self.indicator_counters[ind.id] = c
            self.counters.reset()

    # -- reads -----------------------------------------------------------
    def root(self) -> Relation:
        with self.lock.read():
            return self.stores[self.tree.root.id].snapshot()

    def view(self, node_id: str) -> Relation:
        with self.lock.read():
            if node_id not in self.stores:
                raise UnknownRelation(f"{node_id!r} is not a stored view")
            return self.stores[node_id].snapshot()

    def views(self) -> dict[str, Relation]:
        """Snapshots of every materialized view (leaves and indicators excluded)."""
        with self.lock.read():
            return {v: self.stores[v].snapshot() for v in sorted(self.plan.materialized)}

    def base(self) -> dict[str, Relation]:
        with self.lock.read():
            return {r: self.stores[r].snapshot() for r in self.tree.leaves}

    def sources(self) -> dict[str, Relation]:
        """Current contents of each source relation (first occurrence, source columns)."""
        out = {}
        with self.lock.read():
            for src in self.plan.query.sources():
                occ = self.plan.query.occurrences(src)[0]
                rel = self.stores[occ.name].snapshot()
                m = occ.rename_map()
                out[src] = rename(rel, {v: s for s, v in m.items()}) if m else rel
        return out

    def read_counters(self) -> dict[str, int]:
        with self.lock.read():
            return self.counters.snapshot()

    def reset_counters(self) -> None:
        self.counters.reset()

    def view_entry_counts(self) -> dict[str, int]:
        with self.lock.read():
            return {v: len(self.stores[v]) for v in sorted(self.plan.materialized)}

    def payload_entry_counts(self) -> dict[str, int]:
        """Entries per materialized view counting the size of each payload."""
        size = self.ring.payload_size
        with self.lock.read():
            return {v: sum(size(p) for _, p in self.stores[v].items())
                    for v in sorted(self.plan.materialized)}

    # -- writes ----------------------------------------------------------
    def apply_update(self, delta: UpdateDelta) -> bool:
        """Apply one update; returns whether the root changed."""
        return self.apply_batch([delta]).root_changed

    def apply_batch(self, deltas: Iterable[UpdateDelta]) -> BatchSummary:
        """Apply updates in order as one transaction."""
        deltas = list(deltas)
        journal = Journal()
        with self.lock.write():
            self._attach(journal)
            try:
                changed = False
                tuples = 0
                for d in deltas:
                    changed |= self._apply(d)
                    tuples += d.size()
            except BaseException:
                journal.rollback()
                raise
            finally:
                self._attach(None)
        return BatchSummary(len(deltas), tuples, changed)

    def _attach(self, journal: Journal | None) -> None:
        for s in self.stores.values():
            s.journal = journal
        for c in self.indicator_counters.values():
            c.journal = journal

    def _apply(self, d: UpdateDelta) -> bool:
        q = self.plan.query
        if d.relation not in q.sources():
            raise UnknownRelation(f"update to unknown relation {d.relation!r}")
        occs = q.occurrences(d.relation)
        if any(o.name not in self.plan.updatable for o in occs):
            raise NotUpdatable(f"relation {d.relation!r} is not updatable in this plan")
        src_schema = occs[0].source_schema()
        shape = d.shape()
        if d.listing is not None and d.listing.schema != src_schema:
            raise SchemaMismatch(f"update to {d.relation!r} has schema {d.listing.schema!r}")
        if shape is not None:
            check_shape(src_schema.variables, shape)
        changed = False
        for occ in occs:
            m = occ.rename_map()
            if d.listing is not None:
                terms = None
                listing = rename(d.listing, m) if m else d.listing
            else:
                terms = [[rename(f, m) if m else f for f in t] for t in d.terms]
                listing = None
            if terms is None:
                changed |= self._propagate_listing(occ.name, listing)
            else:
                occ_shape = [f.schema.variables for f in terms[0]]
                dt = self.plan.delta(occ.name, occ_shape)
                for t in terms:
                    if dt.factorized_form is not None:
                        changed |= self._propagate_factorized(dt, t)
                    else:
                        changed |= self._propagate_listing(occ.name, product(t, self.cring, self.counters))
        return changed

    def _propagate_listing(self, relation: str, delta: Relation) -> bool:
        if not len(delta):
            return False
        dt = self.plan.delta(relation)
        changed = self._run_path(dt, delta)
        self._update_base(relation, delta)
        return changed

    def _run_path(self, dt: DeltaTree, delta: Relation) -> bool:
        cur = delta
        for step in dt.steps:
            node = step.node
            ops = [cur if i == step.changed else self.stores[c.id] for i, c in enumerate(node.children)]
            cur = compute_node(node, ops, self.tree, self.cring, self.counters)
            if not len(cur):
                return False
            if node.id in self.plan.materialized:
                self._store_delta(node.id, cur)
        return True

    def _propagate_factorized(self, dt: DeltaTree, factors: list[Relation]) -> bool:
        if any(not len(f) for f in factors):
            return False
        term = factors
        cur = factors
        reached = True
        for fs in dt.factorized_form:
            node = fs.step.node
            nxt = []
            for g in fs.groups:
                ops = [cur[i] for i in g.factors] + [self.stores[node.children[j].id] for j in g.siblings]
                if not g.marginalized and len(ops) == 1:
                    nxt.append(ops[0])
                else:
                    nxt.append(join_aggregate(ops, g.marginalized, self.tree.liftings, self.cring,
                                              self.counters))
            cur = nxt
            if any(not len(f) for f in cur):
                reached = False
                break
            if node.id in self.plan.materialized:
                self._store_delta(node.id, product(cur, self.cring, self.counters))
        self._update_base(dt.target, product(term, self.cring, self.counters))
        return reached

    def _store_delta(self, node_id: str, delta: Relation) -> None:
        store = self.stores[node_id]
        for k, p in delta.items():
            self.counters.entries_touched += 1
            store.add(k, p)

    def _update_base(self, relation: str, delta: Relation) -> None:
        store = self.stores[relation]
        trans = []
        for k, p in delta.items():
            self.counters.entries_touched += 1
            old, new = store.add(k, p)
            if self.strict_deletes and new is not None and _negative(new):
                raise CounterUnderflow(f"relation {relation!r}: tuple {k!r} has negative multiplicity {new}")
            trans.append((k, old is not None, new is not None))
        for ind in self.plan.indicators_of(relation):
            emitted = self.indicator_counters[ind.id].apply(trans)
            if len(emitted) and ind.id in self.plan.deltas:
                self._run_path(self.plan.deltas[ind.id], emitted)
            if len(emitted):
                self._store_delta(ind.id, emitted)

    def maintain_indicator(self, indicator_id: str, delta: Relation) -> Relation:
        """Indicator delta for adding ``delta`` to its relation's current contents.

        Adjusts the indicator's counters but neither the base relation nor any
        view; :meth:`apply_update` calls the same logic as part of a trigger.
        """
        from ringivm.runtime.indicators import transitions

        with self.lock.write():
            c = self.indicator_counters[indicator_id]
            return c.apply(transitions(self.stores[c.relation], delta))


def _negative(p) -> bool:
    return isinstance(p, int) and p < 0
