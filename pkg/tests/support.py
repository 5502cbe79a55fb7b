"""Shared fixtures, data builders and independent oracles for the tests."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

import numpy as np

from ringivm.core.relation import Relation
from ringivm.core.schema import Schema
from ringivm.planner.hypergraph import is_acyclic
from ringivm.planner.order import VariableOrder
from ringivm.planner.query import QuerySpec
from ringivm.rings.degree import DegreeMRing
from ringivm.rings.numeric import IntegerRing, count_catalog

Z = IntegerRing()

RUNNING_SCHEMAS = {
    "R": Schema.of("A:str", "B:str"),
    "S": Schema.of("A:str", "C:str", "E:str"),
    "T": Schema.of("C:str", "D:str"),
}
RUNNING_ROWS = {
    "R": [("a1", "b1"), ("a1", "b2"), ("a2", "b3"), ("a3", "b4")],
    "S": [("a1", "c1", "e1"), ("a1", "c1", "e2"), ("a1", "c2", "e3"), ("a2", "c2", "e4")],
    "T": [("c1", "d1"), ("c2", "d2"), ("c2", "d3"), ("c3", "d4")],
}
RUNNING_ORDER = "A(B, C(D, E))"


def running_db(ring=Z) -> dict[str, Relation]:
    return {r: Relation.from_rows(RUNNING_SCHEMAS[r], ring, RUNNING_ROWS[r]) for r in RUNNING_SCHEMAS}


def running_query(ring=Z, free=(), liftings=None, updatable=None) -> QuerySpec:
    if liftings is None:
        liftings = count_catalog([v for v in "ABCDE" if v not in free], ring)
    return QuerySpec.build(RUNNING_SCHEMAS, free, ring, liftings, updatable)


def running_order() -> VariableOrder:
    return VariableOrder.parse(RUNNING_ORDER)


def rel(schema: Schema, data: dict, ring=Z) -> Relation:
    return Relation(schema, ring, data)


# ---------------------------------------------------------------------------
# independent flat-join oracle over plain python data


def flat_join(tables: dict[str, tuple[tuple[str, ...], list[tuple]]]) -> tuple[list[str], list[tuple]]:
    """Natural join by brute-force enumeration of row combinations (bag semantics)."""
    names = list(tables)
    variables = sorted({v for cols, _ in tables.values() for v in cols})
    out = []
    for combo in itertools.product(*(tables[n][1] for n in names)):
        binding: dict = {}
        ok = True
        for n, row in zip(names, combo):
            for v, x in zip(tables[n][0], row):
                if binding.setdefault(v, x) != x:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(tuple(binding[v] for v in variables))
    return variables, out


def cofactor_oracle(rows: list[tuple], m: int) -> tuple[int, np.ndarray, np.ndarray]:
    J = np.array(rows, dtype=float).reshape(len(rows), m)
    return len(rows), J.sum(axis=0), J.T @ J


# ---------------------------------------------------------------------------
# random acyclic queries


@dataclass
class RandomQuery:
    schemas: dict[str, Schema]
    order: VariableOrder
    free: frozenset[str]
    rows: dict[str, dict[tuple, int]]
    domain: int


def random_acyclic_query(rnd: random.Random, max_rels: int = 4, max_tuples: int = 20,
                         max_vars: int = 5, domain: int = 4) -> RandomQuery:
    """A random variable order with relations along its root-to-leaf paths, filtered by GYO."""
    while True:
        k = rnd.randint(2, max_vars)
        names = [f"V{i}" for i in range(k)]
        parents = {names[0]: None}
        for i in range(1, k):
            parents[names[i]] = None if rnd.random() < 0.1 else names[rnd.randrange(i)]
        probe = VariableOrder(parents)
        nrel = rnd.randint(1, max_rels)
        schemas = {}
        for r in range(nrel):
            v = rnd.choice(names)
            path = [v, *probe.ancestors(v)]
            chosen = {v} | {a for a in path[1:] if rnd.random() < 0.6}
            schemas[f"R{r}"] = sorted(chosen)
        covered = set().union(*map(set, schemas.values()))
        # restrict the order to covered variables
        new_parents = {}
        for v in names:
            if v not in covered:
                continue
            p = parents[v]
            while p is not None and p not in covered:
                p = parents[p]
            new_parents[v] = p
        if not is_acyclic(schemas):
            continue
        order = VariableOrder(new_parents)
        # free variables closed under ancestors, so they sit on top
        free = set()
        if rnd.random() < 0.5:
            for v in new_parents:
                p = new_parents[v]
                if (p is None or p in free) and rnd.random() < 0.4:
                    free.add(v)
            # parents dict preserves creation order; recheck closure
            free = {v for v in free if all(a in free for a in order.ancestors(v))}
        sch = {r: Schema((v, "int") for v in vs) for r, vs in schemas.items()}
        rows = {}
        for r, s in sch.items():
            data = {}
            for _ in range(rnd.randint(0, max_tuples)):
                key = tuple(rnd.randrange(domain) for _ in s.variables)
                data[key] = data.get(key, 0) + rnd.choice([1, 1, 2])
            rows[r] = data
        return RandomQuery(sch, order, frozenset(free), rows, domain)


def degree_ring_for(schemas: dict[str, Schema]) -> DegreeMRing:
    variables = sorted({v for s in schemas.values() for v in s.variables})
    return DegreeMRing(variables=variables)
