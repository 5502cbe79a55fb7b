"""The relational data ring: payloads are relations with integer multiplicities.

Lifting a free variable's value ``x`` gives ``{(x) -> 1}``, so joining and
marginalizing builds the listing of the query result inside the payloads.
Payloads only add when they share a schema (or one side is empty); the
structure is not a ring across schemas, which the engine never needs.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

from ringivm.core.lifting import LiftingFunction, constant_lifting
from ringivm.core.relation import Relation, join, negate, project_payload_sum, union
from ringivm.core.ring import Ring
from ringivm.core.schema import Schema, Value, format_value, kind_of, parse_value
from ringivm.errors import ParseError, SchemaMismatch, UnknownVariable
from ringivm.rings.numeric import IntegerRing

_Z = IntegerRing()
_EMPTY = Schema()


class RelationalRing(Ring):
    name = "relational"
    # join of inner relations is commutative up to the canonical layout
    commutative = True

    def __init__(self):
        self.inner = _Z
        self.zero = Relation.empty(_EMPTY, _Z)
        self.one = Relation(_EMPTY, _Z, {(): 1})

    def add(self, a: Relation, b: Relation) -> Relation:
        if not len(a):
            return b
        if not len(b):
            return a
        if a.schema != b.schema:
            raise SchemaMismatch(f"cannot add payloads over {a.schema} and {b.schema}")
        return union(a, b)

    def mul(self, a: Relation, b: Relation) -> Relation:
        if not len(a) or not len(b):
            return self.zero
        if not len(a.schema) and a[()] == 1:
            return b
        if not len(b.schema) and b[()] == 1:
            return a
        return join(a, b)

    def neg(self, a: Relation) -> Relation:
        return negate(a)

    def is_zero(self, a: Relation) -> bool:
        return len(a) == 0

    def close(self, a, b, tol=0.0):
        if not len(a) and not len(b):
            return True
        return a == b

    def payload_size(self, a: Relation) -> int:
        return len(a)

    def from_int(self, k: int) -> Relation:
        return Relation(_EMPTY, _Z, {(): k})

    def format(self, a: Relation) -> str:
        return format_relational(a)

    def parse(self, text: str, schema: Schema | None = None) -> Relation:
        return parse_relational(text, schema if schema is not None else _EMPTY)

    def lifting(self, variable: str, free: bool) -> LiftingFunction:
        if not free:
            return constant_lifting(variable, self.one)
        return LiftingFunction(variable, lambda x, _v=variable: relational_lift(_v, x, True), "singleton")

    def catalog(self, variables: Iterable[str], free: Iterable[str]) -> dict[str, LiftingFunction]:
        free = set(free)
        return {x: self.lifting(x, x in free) for x in variables}

    default_liftings = catalog


def relational_lift(variable: str, x: Value, free: bool) -> Relation:
    """``{(x) -> 1}`` over ``{variable}`` when free, the ring's one when bound."""
    if not free:
        return Relation(_EMPTY, _Z, {(): 1})
    return Relation._trusted(Schema([(variable, kind_of(x))]), _Z, {(x,): 1})


def factorized_marginalize_payload(p: Relation, keep: str | Sequence[str]) -> Relation:
    """Project the inner relation onto ``keep``, summing multiplicities.

    Payloads with an empty schema are returned unchanged.
    """
    if not len(p.schema):
        return p
    keep = [keep] if isinstance(keep, str) else list(keep)
    missing = [v for v in keep if v not in p.schema]
    if missing:
        raise UnknownVariable(f"cannot keep {missing} of payload over {p.schema}")
    if len(keep) == len(p.schema):
        return p
    return project_payload_sum(p, keep)


def format_relational(a: Relation) -> str:
    parts = []
    for key, k in a.sorted_items():
        parts.append("(" + ",".join(format_value(v) for v in key) + f")*{k}")
    return "[" + "; ".join(parts) + "]"


def parse_relational(text: str, schema: Schema) -> Relation:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise ParseError(f"relational payload must be bracketed: {text!r}")
    body = text[1:-1].strip()
    data: dict[tuple, int] = {}
    if body:
        for part in body.split(";"):
            tup, star, mult = part.strip().rpartition("*")
            if not star or not (tup.startswith("(") and tup.endswith(")")):
                raise ParseError(f"bad relational entry {part!r}")
            raw = [v.strip() for v in tup[1:-1].split(",")] if tup[1:-1].strip() else []
            if len(raw) != len(schema):
                raise SchemaMismatch(f"entry {part!r} does not match {schema}")
            key = tuple(parse_value(v, schema.kind(n)) for v, n in zip(raw, schema.variables))
            data[key] = data.get(key, 0) + int(mult)
    return Relation(schema, _Z, data)
