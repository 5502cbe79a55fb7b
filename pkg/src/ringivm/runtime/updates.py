"""Update batches for one relation, in listing or factorized form."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from ringivm.core.relation import Relation, negate, product, union
from ringivm.core.ring import Ring
from ringivm.core.schema import Schema
from ringivm.errors import BadFactorization


@dataclass
class UpdateDelta:
    """A change to ``relation``: a listing delta, or a sum of rank terms.

    Each rank term is a list of factor relations whose schemas partition the
    relation's schema; the term stands for the product of its factors.
    Inserts carry positive payloads, deletes negated ones.
    """

    relation: str
    listing: Relation | None = None
    terms: list[list[Relation]] | None = None

    def __post_init__(self):
        if (self.listing is None) == (self.terms is None):
            raise ValueError("an update is either a listing or a list of rank terms")
        if self.terms is not None:
            self.terms = [list(t) for t in self.terms]
            if not self.terms:
                raise BadFactorization("factorized update without rank terms")

    @classmethod
    def rows(cls, relation: str, schema: Schema, ring: Ring, rows: Iterable[Sequence],
             payloads: Iterable | None = None, columns: Sequence[str] | None = None) -> "UpdateDelta":
        return cls(relation, Relation.from_rows(schema, ring, rows, columns, payloads))

    @classmethod
    def factorized(cls, relation: str, *terms: Sequence[Relation]) -> "UpdateDelta":
        return cls(relation, terms=[list(t) for t in terms])

    @property
    def is_factorized(self) -> bool:
        return self.terms is not None

    def shape(self) -> tuple[tuple[str, ...], ...] | None:
        """Factor schemas shared by all rank terms (``None`` for listing updates)."""
        if self.terms is None:
            return None
        shapes = {tuple(f.schema.variables for f in t) for t in self.terms}
        if len(shapes) != 1:
            raise BadFactorization(f"rank terms disagree on their factor schemas: {sorted(shapes)}")
        return shapes.pop()

    def expand(self, ring: Ring | None = None) -> Relation:
        if self.listing is not None:
            return self.listing
        ring = ring or self.terms[0][0].ring
        out = None
        for t in self.terms:
            p = product(t, ring)
            out = p if out is None else union(out, p)
        return out

    def negate(self) -> "UpdateDelta":
        if self.listing is not None:
            return UpdateDelta(self.relation, negate(self.listing))
        return UpdateDelta(self.relation, terms=[[negate(t[0]), *t[1:]] for t in self.terms])

    def size(self) -> int:
        if self.listing is not None:
            return len(self.listing)
        return sum(sum(len(f) for f in t) for t in self.terms)
