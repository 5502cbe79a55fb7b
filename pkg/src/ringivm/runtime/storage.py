"""Mutable view storage with incrementally maintained lookup indexes."""

from __future__ import annotations

from collections.abc import Iterable

from ringivm.core.relation import Relation
from ringivm.core.ring import Payload, Ring
from ringivm.core.schema import Schema


class Journal:
    """Undo log of touched entries; rolling back restores them in reverse."""

    def __init__(self):
        self._entries: list[tuple[object, object, object]] = []

    def record(self, target, key, old) -> None:
        self._entries.append((target, key, old))

    def rollback(self) -> None:
        for target, key, old in reversed(self._entries):
            target._restore(key, old)
        self._entries.clear()

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


class StoredRelation:
    """A relation that accepts in-place deltas.

    Lookups on a variable subset build a hash index on first use; later
    updates keep every built index current.
    """

    def __init__(self, schema: Schema, ring: Ring, data: Relation | dict | None = None):
        self.schema = schema
        self.ring = ring
        if isinstance(data, Relation):
            data = data.to_dict()
        self._data: dict = dict(data or {})
        self._indexes: dict[tuple[str, ...], tuple[tuple[int, ...], dict]] = {}
        self.journal: Journal | None = None

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key) -> bool:
        return key in self._data

    def get(self, key) -> Payload | None:
        return self._data.get(key)

    def __getitem__(self, key) -> Payload:
        return self._data.get(key, self.ring.zero)

    def items(self):
        return self._data.items()

    def lookup(self, variables: tuple[str, ...], values: tuple):
        if not variables:
            return self._data.items()
        entry = self._indexes.get(variables)
        if entry is None:
            pos = self.schema.positions(variables)
            index: dict = {}
            for k in self._data:
                index.setdefault(tuple(k[i] for i in pos), {})[k] = None
            entry = (pos, index)
            self._indexes[variables] = entry
        bucket = entry[1].get(values)
        if not bucket:
            return ()
        data = self._data
        return [(k, data[k]) for k in bucket]

    def _index_add(self, key) -> None:
        for pos, index in self._indexes.values():
            index.setdefault(tuple(key[i] for i in pos), {})[key] = None

    def _index_remove(self, key) -> None:
        for pos, index in self._indexes.values():
            sub = tuple(key[i] for i in pos)
            bucket = index.get(sub)
            if bucket is not None:
                bucket.pop(key, None)
                if not bucket:
                    del index[sub]

    def _restore(self, key, old) -> None:
        present = key in self._data
        if old is None:
            if present:
                del self._data[key]
                self._index_remove(key)
        else:
            self._data[key] = old
            if not present:
                self._index_add(key)

    def add(self, key, delta: Payload) -> tuple[Payload | None, Payload | None]:
        """``self[key] += delta``; returns the old and new payloads (None when absent)."""
        old = self._data.get(key)
        if self.journal is not None:
            self.journal.record(self, key, old)
        if old is None:
            if self.ring.is_zero(delta):
                return None, None
            self._data[key] = delta
            self._index_add(key)
            return None, delta
        new = self.ring.add(old, delta)
        if self.ring.is_zero(new):
            del self._data[key]
            self._index_remove(key)
            return old, None
        self._data[key] = new
        return old, new

    def add_all(self, delta: Relation | Iterable) -> list[tuple[object, bool, bool]]:
        """Apply every entry; returns ``(key, was_present, is_present)`` per entry."""
        out = []
        items = delta.items() if hasattr(delta, "items") else delta
        for k, p in items:
            old, new = self.add(k, p)
            out.append((k, old is not None, new is not None))
        return out

    def snapshot(self) -> Relation:
        return Relation(self.schema, self.ring, dict(self._data))
