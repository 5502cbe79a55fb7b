"""Counting-based maintenance of indicator projections."""

from __future__ import annotations

from collections.abc import Iterable

from ringivm.core.relation import Relation
from ringivm.core.ring import Ring
from ringivm.core.schema import Schema
from ringivm.errors import CounterUnderflow


class IndicatorCounter:
    """Tracks, per projected key, how many base tuples have a non-zero payload.

    The indicator ``∃_keys R`` holds exactly the keys whose count is positive,
    so only 0 -> 1 and 1 -> 0 transitions change it.
    """

    def __init__(self, ind_id: str, relation: str, source: Schema, keys: Iterable[str], ring: Ring):
        self.id = ind_id
        self.relation = relation
        self.keys = tuple(sorted(keys))
        self.schema = source.project(self.keys)
        self._pos = source.positions(self.keys)
        self.ring = ring
        self.counts: dict[tuple, int] = {}
        self.journal = None

    def build(self, base: Iterable) -> None:
        self.counts.clear()
        for k in base:
            sub = tuple(k[i] for i in self._pos)
            self.counts[sub] = self.counts.get(sub, 0) + 1

    def view(self) -> Relation:
        one = self.ring.one
        return Relation._trusted(self.schema, self.ring, {k: one for k in self.counts})

    def _restore(self, key, old) -> None:
        if old is None:
            self.counts.pop(key, None)
        else:
            self.counts[key] = old

    def apply(self, transitions: Iterable[tuple[tuple, bool, bool]]) -> Relation:
        """Fold ``(key, was_nonzero, is_nonzero)`` base transitions into the counts.

        Returns the indicator delta: ``+1`` for keys that appear, ``-1`` for
        keys that disappear.
        """
        changes: dict[tuple, int] = {}
        for key, was, now in transitions:
            if was == now:
                continue
            sub = tuple(key[i] for i in self._pos)
            changes[sub] = changes.get(sub, 0) + (1 if now else -1)
        one, minus = self.ring.one, self.ring.neg(self.ring.one)
        out = {}
        for sub, d in changes.items():
            if d == 0:
                continue
            old = self.counts.get(sub)
            new = (old or 0) + d
            if new < 0:
                raise CounterUnderflow(f"indicator {self.id}: count for {sub!r} would drop to {new}")
            if self.journal is not None:
                self.journal.record(self, sub, old)
            if new == 0:
                del self.counts[sub]
                out[sub] = minus
            else:
                self.counts[sub] = new
                if not old:
                    out[sub] = one
        return Relation._trusted(self.schema, self.ring, out)

    def maintain(self, base, delta: Relation) -> Relation:
        """Indicator delta caused by adding ``delta`` to ``base`` (``base`` is not modified)."""
        return self.apply(transitions(base, delta))


def transitions(base, delta: Relation) -> list[tuple[tuple, bool, bool]]:
    """Which keys of ``delta`` switch between zero and non-zero when added to ``base``."""
    ring = delta.ring
    out = []
    for k, p in delta.items():
        old = base.get(k)
        if old is None:
            out.append((k, False, not ring.is_zero(p)))
        else:
            out.append((k, True, not ring.is_zero(ring.add(old, p))))
    return out
