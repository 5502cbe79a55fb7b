"""Variables, value kinds and schemas.

Every schema keeps its variables sorted by name. That single global rule is
the canonical variable order: it fixes tuple layouts, join output schemas and
projections, so two relations over the same variable set always agree on key
positions.
"""

from __future__ import annotations

import sys
from collections.abc import Iterable, Sequence
from typing import Union

from ringivm.errors import SchemaMismatch, UnknownVariable

Value = Union[int, float, str]

KINDS = ("int", "float", "str")

_PY_TYPES = {"int": int, "float": float, "str": str}


def kind_of(value: Value) -> str:
    if isinstance(value, bool):
        raise SchemaMismatch(f"boolean values are not supported: {value!r}")
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    raise SchemaMismatch(f"unsupported value type {type(value).__name__}")


def parse_value(text: str, kind: str) -> Value:
    """Parse the textual form of a value of the given kind."""
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "str":
        return sys.intern(text)
    raise SchemaMismatch(f"unknown value kind {kind!r}")


def format_value(value: Value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Schema:
    """An ordered, duplicate-free set of typed variables.

    ``Schema([("B", "int"), ("A", "str")])`` and ``Schema.of("A:str", "B:int")``
    are the same schema; variables are always stored in canonical order.
    """

    __slots__ = ("_vars", "_kinds", "_pos", "_hash")

    def __init__(self, variables: Iterable[tuple[str, str]] = ()):
        pairs = list(variables)
        kinds: dict[str, str] = {}
        for name, kind in pairs:
            if kind not in KINDS:
                raise SchemaMismatch(f"unknown kind {kind!r} for variable {name!r}")
            if name in kinds:
                raise SchemaMismatch(f"duplicate variable {name!r} in schema")
            kinds[name] = kind
        self._vars: tuple[str, ...] = tuple(sorted(kinds))
        self._kinds = kinds
        self._pos = {v: i for i, v in enumerate(self._vars)}
        self._hash = hash(tuple((v, kinds[v]) for v in self._vars))

    @classmethod
    def of(cls, *specs: str) -> "Schema":
        """Build from ``"name:kind"`` strings; the kind defaults to ``int``."""
        pairs = []
        for spec in specs:
            name, _, kind = spec.partition(":")
            pairs.append((name.strip(), kind.strip() or "int"))
        return cls(pairs)

    @property
    def variables(self) -> tuple[str, ...]:
        return self._vars

    def kind(self, var: str) -> str:
        try:
            return self._kinds[var]
        except KeyError:
            raise UnknownVariable(f"variable {var!r} not in schema {self}") from None

    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple((v, self._kinds[v]) for v in self._vars)

    def position(self, var: str) -> int:
        try:
            return self._pos[var]
        except KeyError:
            raise UnknownVariable(f"variable {var!r} not in schema {self}") from None

    def positions(self, variables: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.position(v) for v in variables)

    def project(self, variables: Iterable[str]) -> "Schema":
        wanted = set(variables)
        missing = wanted - self._kinds.keys()
        if missing:
            raise UnknownVariable(f"variables {sorted(missing)} not in schema {self}")
        return Schema((v, self._kinds[v]) for v in self._vars if v in wanted)

    def without(self, variables: Iterable[str]) -> "Schema":
        drop = set(variables)
        missing = drop - self._kinds.keys()
        if missing:
            raise UnknownVariable(f"variables {sorted(missing)} not in schema {self}")
        return Schema((v, self._kinds[v]) for v in self._vars if v not in drop)

    def union(self, other: "Schema") -> "Schema":
        merged = dict(self._kinds)
        for v, k in other._kinds.items():
            if merged.setdefault(v, k) != k:
                raise SchemaMismatch(
                    f"variable {v!r} has kind {merged[v]} and {k} in joined schemas"
                )
        return Schema(merged.items())

    def check_tuple(self, values: Sequence[Value]) -> None:
        if len(values) != len(self._vars):
            raise SchemaMismatch(
                f"tuple {tuple(values)!r} has {len(values)} values, schema {self} needs {len(self._vars)}"
            )
        for var, value in zip(self._vars, values):
            if kind_of(value) != self._kinds[var]:
                raise SchemaMismatch(
                    f"value {value!r} for {var!r} is not of kind {self._kinds[var]}"
                )

    def __contains__(self, var: object) -> bool:
        return var in self._kinds

    def __iter__(self):
        return iter(self._vars)

    def __len__(self) -> int:
        return len(self._vars)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Schema):
            return NotImplemented
        return self._vars == other._vars and self._kinds == other._kinds

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return "Schema(" + ", ".join(f"{v}:{self._kinds[v]}" for v in self._vars) + ")"

    def __str__(self) -> str:
        return "[" + ",".join(self._vars) + "]"


def reorder(values: Sequence[Value], columns: Sequence[str], schema: Schema) -> tuple:
    """Rearrange ``values`` given in ``columns`` order into the schema's layout."""
    by_name = dict(zip(columns, values))
    if len(by_name) != len(schema) or set(by_name) != set(schema.variables):
        raise SchemaMismatch(f"columns {list(columns)} do not match schema {schema}")
    return tuple(by_name[v] for v in schema.variables)
