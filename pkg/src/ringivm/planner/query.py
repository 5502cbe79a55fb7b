"""Query specifications: relations, free variables, ring and liftings."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from ringivm.core.lifting import LiftingFunction
from ringivm.core.ring import Ring, base_ring
from ringivm.core.schema import Schema
from ringivm.errors import SchemaMismatch, UnknownRelation, ValidationError


@dataclass(frozen=True)
class RelationSpec:
    """One relation occurrence of the query.

    ``source`` names the stored input relation; it differs from ``name`` only
    for self-joins, where ``rename`` maps source columns to this occurrence's
    variables.
    """

    name: str
    schema: Schema
    source: str | None = None
    rename: tuple[tuple[str, str], ...] | None = None

    @property
    def source_name(self) -> str:
        return self.source or self.name

    def source_schema(self) -> Schema:
        if not self.rename:
            return self.schema
        return Schema((src, self.schema.kind(var)) for src, var in self.rename)

    def rename_map(self) -> dict[str, str] | None:
        return dict(self.rename) if self.rename else None


@dataclass
class QuerySpec:
    """``SUM_{bound} (R_1 * ... * R_n)`` grouped by ``free``, over ``ring``."""

    relations: list[RelationSpec]
    free: frozenset[str]
    ring: Ring
    liftings: dict[str, LiftingFunction] = field(default_factory=dict)
    updatable: frozenset[str] | None = None  # source names; None means all

    def __post_init__(self):
        self.free = frozenset(self.free)
        if self.updatable is not None:
            self.updatable = frozenset(self.updatable)
        # rings with a canonical catalog (relational payloads) fill in missing liftings
        defaults = getattr(base_ring(self.ring), "default_liftings", None)
        if defaults is not None:
            for v, g in defaults(self.schema.variables, self.free).items():
                self.liftings.setdefault(v, g)
        self.validate()

    @classmethod
    def build(
        cls,
        relations: Mapping[str, Schema] | Sequence[RelationSpec],
        free: Iterable[str],
        ring: Ring,
        liftings: Mapping[str, LiftingFunction] | None = None,
        updatable: Iterable[str] | None = None,
    ) -> "QuerySpec":
        if isinstance(relations, Mapping):
            rels = [RelationSpec(n, s) for n, s in relations.items()]
        else:
            rels = list(relations)
        return cls(rels, frozenset(free), ring, dict(liftings or {}),
                   None if updatable is None else frozenset(updatable))

    # -- derived -------------------------------------------------------
    @property
    def names(self) -> list[str]:
        return [r.name for r in self.relations]

    @property
    def variables(self) -> list[str]:
        return list(self.schema.variables)

    @property
    def schema(self) -> Schema:
        s = Schema()
        for r in self.relations:
            s = s.union(r.schema)
        return s

    @property
    def bound(self) -> list[str]:
        return [v for v in self.schema.variables if v not in self.free]

    def relation(self, name: str) -> RelationSpec:
        for r in self.relations:
            if r.name == name:
                return r
        raise UnknownRelation(f"no relation named {name!r} in the query")

    def sources(self) -> dict[str, Schema]:
        out: dict[str, Schema] = {}
        for r in self.relations:
            sch = r.source_schema()
            prev = out.setdefault(r.source_name, sch)
            if prev != sch:
                raise SchemaMismatch(
                    f"occurrences of {r.source_name!r} disagree on its columns: {prev!r} vs {sch!r}"
                )
        return out

    def occurrences(self, source: str) -> list[RelationSpec]:
        return [r for r in self.relations if r.source_name == source]

    def is_updatable(self, source: str) -> bool:
        return self.updatable is None or source in self.updatable

    def updatable_relations(self) -> frozenset[str]:
        """Occurrence names whose source accepts updates."""
        return frozenset(r.name for r in self.relations if self.is_updatable(r.source_name))

    def validate(self) -> None:
        seen = set()
        for r in self.relations:
            if r.name in seen:
                raise ValidationError(f"relation {r.name!r} declared twice")
            seen.add(r.name)
        schema = self.schema  # raises SchemaMismatch on kind conflicts
        srcs = self.sources()
        missing = sorted(self.free - set(schema.variables))
        if missing:
            raise ValidationError(f"free variables {missing} occur in no relation")
        unlifted = [v for v in self.bound if v not in self.liftings]
        if unlifted:
            raise ValidationError(f"bound variables {unlifted} have no lifting function")
        if self.updatable is not None:
            unknown = sorted(self.updatable - set(srcs))
            if unknown:
                raise ValidationError(f"updatable relations {unknown} are not in the query")
