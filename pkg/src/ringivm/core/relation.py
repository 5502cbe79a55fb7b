"""Ring-valued relations and the query-language operators over them."""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from typing import Protocol

from ringivm.core.lifting import LiftingFunction
from ringivm.core.ring import OpCounters, Payload, Ring
from ringivm.core.schema import Schema, Value, reorder
from ringivm.errors import SchemaMismatch, UnknownVariable

Key = tuple


class RelationLike(Protocol):
    """What the join machinery needs from an operand: schema, scan and lookups."""

    schema: Schema

    def __len__(self) -> int: ...

    def items(self) -> Iterable[tuple[Key, Payload]]: ...

    def get(self, key: Key) -> Payload | None: ...

    def lookup(self, variables: tuple[str, ...], values: tuple) -> Iterable[tuple[Key, Payload]]: ...


class Relation:
    """A finite map from keys over ``schema`` to non-zero payloads of ``ring``.

    Relations are treated as immutable once built. Zero payloads are dropped at
    construction, so ``len`` is the number of keys with a non-zero payload.
    """

    __slots__ = ("schema", "ring", "_data", "_indexes")

    def __init__(
        self,
        schema: Schema,
        ring: Ring,
        data: Mapping[Key, Payload] | Iterable[tuple[Key, Payload]] | None = None,
    ):
        self.schema = schema
        self.ring = ring
        self._indexes: dict[tuple[str, ...], dict[tuple, list]] = {}
        items = data.items() if isinstance(data, Mapping) else (data or ())
        is_zero = ring.is_zero
        self._data: dict[Key, Payload] = {k: p for k, p in items if not is_zero(p)}

    @classmethod
    def _trusted(cls, schema: Schema, ring: Ring, data: dict[Key, Payload]) -> "Relation":
        # caller guarantees zero-suppression
        rel = cls.__new__(cls)
        rel.schema = schema
        rel.ring = ring
        rel._data = data
        rel._indexes = {}
        return rel

    @classmethod
    def from_rows(
        cls,
        schema: Schema,
        ring: Ring,
        rows: Iterable[Sequence[Value]],
        columns: Sequence[str] | None = None,
        payloads: Iterable[Payload] | None = None,
    ) -> "Relation":
        """Build a relation from value rows, summing payloads of repeated keys.

        ``columns`` names the row layout when it differs from the canonical one.
        Without ``payloads`` every row contributes ``ring.one``.
        """
        data: dict[Key, Payload] = {}
        pays = iter(payloads) if payloads is not None else None
        for row in rows:
            key = reorder(row, columns, schema) if columns is not None else tuple(row)
            schema.check_tuple(key)
            p = next(pays) if pays is not None else ring.one
            data[key] = ring.add(data[key], p) if key in data else p
        return cls(schema, ring, data)

    @classmethod
    def empty(cls, schema: Schema, ring: Ring) -> "Relation":
        return cls._trusted(schema, ring, {})

    # -- mapping protocol -------------------------------------------------
    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self) -> Iterator[Key]:
        return iter(self._data)

    def __contains__(self, key: object) -> bool:
        return key in self._data

    def __getitem__(self, key: Key) -> Payload:
        return self._data.get(key, self.ring.zero)

    def get(self, key: Key) -> Payload | None:
        return self._data.get(key)

    def items(self):
        return self._data.items()

    def sorted_items(self) -> list[tuple[Key, Payload]]:
        return sorted(self._data.items(), key=lambda kv: kv[0])

    def to_dict(self) -> dict[Key, Payload]:
        return dict(self._data)

    def lookup(self, variables: tuple[str, ...], values: tuple) -> Iterable[tuple[Key, Payload]]:
        if not variables:
            return self._data.items()
        index = self._indexes.get(variables)
        if index is None:
            pos = self.schema.positions(variables)
            index = {}
            for k, p in self._data.items():
                index.setdefault(tuple(k[i] for i in pos), []).append((k, p))
            self._indexes[variables] = index
        return index.get(values, ())

    # -- comparisons ------------------------------------------------------
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.schema == other.schema and self._data == other._data

    def __hash__(self) -> int:
        return hash((self.schema, frozenset(self._data)))

    def close_to(self, other: "Relation", tol: float = 0.0) -> bool:
        if self.schema != other.schema or self._data.keys() != other._data.keys():
            return False
        return all(self.ring.close(p, other._data[k], tol) for k, p in self._data.items())

    def __repr__(self) -> str:
        body = ", ".join(f"{k!r}: {self.ring.format(p)}" for k, p in self.sorted_items()[:8])
        more = ", ..." if len(self) > 8 else ""
        return f"Relation{self.schema}{{{body}{more}}}"


# ---------------------------------------------------------------------------
# operators


def _check_same_ring(a: Relation, b: Relation) -> None:
    if a.ring is not b.ring and type(a.ring) is not type(b.ring):
        raise SchemaMismatch(f"relations over different rings: {a.ring!r} vs {b.ring!r}")


def union(a: Relation, b: Relation) -> Relation:
    """Key-wise payload sum; the schemas must be identical."""
    if a.schema != b.schema:
        raise SchemaMismatch(f"union of {a.schema!r} and {b.schema!r}")
    _check_same_ring(a, b)
    ring = a.ring
    data = dict(a._data)
    for k, p in b._data.items():
        if k in data:
            s = ring.add(data[k], p)
            if ring.is_zero(s):
                del data[k]
            else:
                data[k] = s
        else:
            data[k] = p
    return Relation._trusted(a.schema, ring, data)


def negate(r: Relation) -> Relation:
    neg = r.ring.neg
    return Relation._trusted(r.schema, r.ring, {k: neg(p) for k, p in r._data.items()})


def scale(r: Relation, factor: Payload) -> Relation:
    """Multiply every payload on the right by ``factor``."""
    ring = r.ring
    return Relation(r.schema, ring, {k: ring.mul(p, factor) for k, p in r._data.items()})


def join(a: Relation, b: Relation) -> Relation:
    """Natural join; payloads multiply as ``a[...] * b[...]`` (left operand first)."""
    _check_same_ring(a, b)
    return join_aggregate([a, b], (), {}, a.ring)


def marginalize(r: Relation, x: str, g: LiftingFunction) -> Relation:
    """Sum ``x`` away, multiplying each payload on the right by ``g(x)``."""
    return marginalize_many(r, [x], [g])


def marginalize_many(
    r: Relation, xs: Sequence[str], gs: Sequence[LiftingFunction]
) -> Relation:
    """Marginalize several variables in one pass.

    The lifted payloads multiply on the right in ``xs`` order, which matches
    applying :func:`marginalize` once per variable in that order.
    """
    if len(xs) != len(gs):
        raise ValueError("one lifting function per marginalized variable is required")
    for x in xs:
        if x not in r.schema:
            raise UnknownVariable(f"cannot marginalize {x!r}: not in {r.schema}")
    if len(set(xs)) != len(xs):
        raise UnknownVariable(f"variable marginalized twice in {list(xs)}")
    out = r.schema.without(xs)
    ring = r.ring
    out_pos = r.schema.positions(out.variables)
    lift_pos = [(r.schema.position(x), g) for x, g in zip(xs, gs)]
    data: dict[Key, Payload] = {}
    for k, p in r._data.items():
        for pos, g in lift_pos:
            p = ring.mul(p, g(k[pos]))
        ok = tuple(k[i] for i in out_pos)
        data[ok] = ring.add(data[ok], p) if ok in data else p
    return Relation(out, ring, data)


def indicator_project(r: Relation, variables: Iterable[str]) -> Relation:
    """Project non-zero keys onto ``variables`` with payload ``one``."""
    out = r.schema.project(variables)
    pos = r.schema.positions(out.variables)
    one = r.ring.one
    data = {tuple(k[i] for i in pos): one for k in r._data}
    return Relation._trusted(out, r.ring, data)


def project_payload_sum(r: Relation, variables: Iterable[str]) -> Relation:
    """Sum payloads of keys with equal projection onto ``variables`` (no lifting)."""
    out = r.schema.project(variables)
    pos = r.schema.positions(out.variables)
    ring = r.ring
    data: dict[Key, Payload] = {}
    for k, p in r._data.items():
        ok = tuple(k[i] for i in pos)
        data[ok] = ring.add(data[ok], p) if ok in data else p
    return Relation(out, ring, data)


def rename(r: Relation, mapping: Mapping[str, str]) -> Relation:
    """Rename variables; keys are re-laid out for the new canonical order."""
    new_schema = Schema((mapping.get(v, v), r.schema.kind(v)) for v in r.schema.variables)
    src_names = [mapping.get(v, v) for v in r.schema.variables]
    perm = [src_names.index(v) for v in new_schema.variables]
    data = {tuple(k[i] for i in perm): p for k, p in r._data.items()}
    return Relation._trusted(new_schema, r.ring, data)


# ---------------------------------------------------------------------------
# fused multi-way join + marginalization


def _join_order(operands: Sequence[RelationLike]) -> list[int]:
    n = len(operands)
    if n == 0:
        return []
    remaining = set(range(n))
    first = min(remaining, key=lambda i: (len(operands[i]), i))
    order = [first]
    remaining.discard(first)
    bound = set(operands[first].schema.variables)
    while remaining:
        def score(i: int):
            sch = operands[i].schema.variables
            shared = sum(1 for v in sch if v in bound)
            full = shared == len(sch)
            return (-int(full), -shared, len(operands[i]), i)

        nxt = min(remaining, key=score)
        order.append(nxt)
        remaining.discard(nxt)
        bound.update(operands[nxt].schema.variables)
    return order


def join_aggregate(
    operands: Sequence[RelationLike],
    marginalized: Sequence[str],
    liftings: Mapping[str, LiftingFunction],
    ring: Ring,
    counters: OpCounters | None = None,
    out_schema: Schema | None = None,
) -> Relation:
    """Compute ``SUM_{marginalized} (op_0 * op_1 * ... * op_n)`` in one pass.

    Operands are probed in a greedy order (smallest first, then most shared
    variables) but payloads always multiply in operand order, followed by the
    lifted values of ``marginalized`` in that order.
    """
    schema = Schema()
    for op in operands:
        schema = schema.union(op.schema)
    for x in marginalized:
        if x not in schema:
            raise UnknownVariable(f"cannot marginalize {x!r}: not in {schema}")
    out = schema.without(marginalized)
    if out_schema is not None and out_schema != out:
        raise SchemaMismatch(f"join result {out!r} differs from expected {out_schema!r}")
    if any(len(op) == 0 for op in operands):
        return Relation.empty(out, ring)

    slots = {v: i for i, v in enumerate(schema.variables)}
    order = _join_order(operands)
    steps = []
    bound: set[str] = set()
    for oi in order:
        sch = operands[oi].schema.variables
        look = tuple(v for v in sch if v in bound)
        look_slots = tuple(slots[v] for v in look)
        new = tuple((p, slots[v]) for p, v in enumerate(sch) if v not in bound)
        point = len(look) == len(sch)
        steps.append((oi, look, look_slots, new, point))
        bound.update(sch)

    vals: list = [None] * len(slots)
    pays: list = [None] * len(operands)
    out_slots = tuple(slots[v] for v in out.variables)
    lifts = tuple((slots[x], liftings[x]) for x in marginalized)
    nsteps = len(steps)
    mul, add = ring.mul, ring.add
    acc: dict[Key, Payload] = {}
    touched = 0

    def emit() -> None:
        p = pays[0]
        for q in pays[1:]:
            p = mul(p, q)
        for slot, g in lifts:
            p = mul(p, g(vals[slot]))
        k = tuple(vals[s] for s in out_slots)
        acc[k] = add(acc[k], p) if k in acc else p

    def run(depth: int) -> None:
        nonlocal touched
        if depth == nsteps:
            emit()
            return
        oi, look, look_slots, new, point = steps[depth]
        op = operands[oi]
        if point:
            # all variables already bound: single probe in canonical key order
            key = tuple(vals[s] for s in look_slots)
            p = op.get(key)
            touched += 1
            if p is not None:
                pays[oi] = p
                run(depth + 1)
            return
        entries = op.lookup(look, tuple(vals[s] for s in look_slots))
        for k, p in list(entries):
            touched += 1
            for pos, slot in new:
                vals[slot] = k[pos]
            pays[oi] = p
            run(depth + 1)

    run(0)
    if counters is not None:
        counters.entries_touched += touched
    is_zero = ring.is_zero
    return Relation._trusted(out, ring, {k: p for k, p in acc.items() if not is_zero(p)})


def product(factors: Sequence[Relation], ring: Ring, counters: OpCounters | None = None) -> Relation:
    """Expand a product of relations (typically with disjoint schemas)."""
    if not factors:
        return Relation._trusted(Schema(), ring, {(): ring.one})
    return join_aggregate(factors, (), {}, ring, counters)
