"""Matrix chain multiplication as a maintained query.

Matrix ``A_k`` becomes a relation over ``(X_k, X_{k+1})`` with the entries as
numeric payloads; every index variable lifts to 1, so the root view keyed by
``(X_1, X_{n+1})`` holds the chain product. Rank-r updates arrive as sums of
``u vᵀ`` products and propagate in factorized form.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ringivm.core.relation import Relation
from ringivm.core.ring import CountingRing, OpCounters
from ringivm.core.schema import Schema
from ringivm.errors import DimensionMismatch, OracleDivergence
from ringivm.harness.config import MatrixChainConfig
from ringivm.harness.metrics import Metrics
from ringivm.planner.order import VariableOrder
from ringivm.planner.plan import Plan, compile_plan
from ringivm.planner.query import QuerySpec
from ringivm.planner.viewtree import evaluate_tree
from ringivm.rings.numeric import RealRing, count_catalog
from ringivm.runtime.engine import Engine
from ringivm.runtime.updates import UpdateDelta


def index_var(i: int) -> str:
    return f"X{i}"


def chain_order(n: int) -> VariableOrder:
    """``X1 - X{n+1}`` on top, then the inner indices split at their midpoint recursively."""
    parents: dict[str, str | None] = {index_var(1): None, index_var(n + 1): index_var(1)}

    def split(lo: int, hi: int, parent: str) -> None:
        if lo > hi:
            return
        mid = (lo + hi) // 2
        parents[index_var(mid)] = parent
        split(lo, mid - 1, index_var(mid))
        split(mid + 1, hi, index_var(mid))

    split(2, n, index_var(n + 1))
    return VariableOrder(parents)


def chain_query(n: int, ring: RealRing | None = None) -> QuerySpec:
    ring = ring or RealRing()
    rels = {f"A{k}": Schema([(index_var(k), "int"), (index_var(k + 1), "int")]) for k in range(1, n + 1)}
    variables = [index_var(i) for i in range(1, n + 2)]
    free = {index_var(1), index_var(n + 1)}
    return QuerySpec.build(rels, free, ring, count_catalog([v for v in variables if v not in free], ring))


def chain_plan(n: int, ring: RealRing | None = None) -> Plan:
    return compile_plan(chain_query(n, ring), chain_order(n))


def matrix_relation(k: int, M: np.ndarray, ring) -> Relation:
    schema = Schema([(index_var(k), "int"), (index_var(k + 1), "int")])
    data = {}
    for i, j in zip(*np.nonzero(M)):
        a, b = (int(i), int(j)) if index_var(k) < index_var(k + 1) else (int(j), int(i))
        data[(a, b)] = float(M[i, j])
    return Relation(schema, ring, data)


def vector_relation(var: str, x: np.ndarray, ring) -> Relation:
    return Relation(Schema([(var, "int")]), ring, {(int(i),): float(x[i]) for i in np.nonzero(x)[0]})


def result_matrix(root: Relation, rows: int, cols: int, n: int) -> np.ndarray:
    out = np.zeros((rows, cols))
    first, last = index_var(1), index_var(n + 1)
    pi, pj = root.schema.position(first), root.schema.position(last)
    for key, p in root.items():
        out[key[pi], key[pj]] = p
    return out


def rank_update(k: int, us: list[np.ndarray], vs: list[np.ndarray], ring) -> UpdateDelta:
    """``δA_k = Σ_r u_r v_rᵀ`` as factorized rank terms."""
    terms = [[vector_relation(index_var(k), u, ring), vector_relation(index_var(k + 1), v, ring)]
             for u, v in zip(us, vs)]
    return UpdateDelta.factorized(f"A{k}", *terms)


def read_matrix(path: Path) -> np.ndarray:
    """``i,j,value`` rows (header optional); the shape is the largest index plus one."""
    entries = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue
            entries.append((int(row[0]), int(row[1]), float(row[2])))
    if not entries:
        raise DimensionMismatch(f"{path}: no matrix entries")
    rows = max(e[0] for e in entries) + 1
    cols = max(e[1] for e in entries) + 1
    M = np.zeros((rows, cols))
    for i, j, v in entries:
        M[i, j] += v
    return M


def read_vector(path: Path, size: int) -> np.ndarray:
    x = np.zeros(size)
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue
            i = int(row[0])
            if not 0 <= i < size:
                raise DimensionMismatch(f"{path}: index {i} outside dimension {size}")
            x[i] += float(row[1])
    return x


@dataclass
class ChainRun:
    metrics: Metrics
    result: np.ndarray
    expected: np.ndarray
    max_error: float


def recompute_cost(plan: Plan, database: dict[str, Relation]) -> dict[str, int]:
    """Operation counts of evaluating the whole view tree from scratch."""
    counters = OpCounters()
    ring = CountingRing(plan.ring, counters)
    evaluate_tree(plan.tree, database, ring)
    return counters.snapshot()


def run_matrix_chain(cfg: MatrixChainConfig, tol: float = 1e-9) -> ChainRun:
    """Build the chain, apply the configured rank-r updates and compare to a dense recompute."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.length
    if cfg.matrices:
        if len(cfg.matrices) != n:
            raise DimensionMismatch(f"{len(cfg.matrices)} matrix files for a chain of length {n}")
        mats = [read_matrix(p) for p in cfg.matrices]
    else:
        mats = [rng.standard_normal((cfg.p, cfg.p)) for _ in range(n)]
    for a, b in zip(mats, mats[1:]):
        if a.shape[1] != b.shape[0]:
            raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    ring = RealRing()
    plan = chain_plan(n, ring)
    db = {f"A{k}": matrix_relation(k, M, ring) for k, M in enumerate(mats, start=1)}
    engine = Engine(plan, db)
    m = Metrics()
    m.observe_views(engine.view_entry_counts())
    k = cfg.target
    rows, cols = mats[k - 1].shape
    start = time.perf_counter()
    for step in range(cfg.updates):
        if cfg.u:
            us = [read_vector(p, rows) for p in cfg.u]
            vs = [read_vector(p, cols) for p in cfg.v]
            if len(us) != len(vs):
                raise DimensionMismatch("u and v files must pair up")
        else:
            us = [rng.standard_normal(rows) for _ in range(cfg.rank)]
            vs = [rng.standard_normal(cols) for _ in range(cfg.rank)]
        upd = rank_update(k, us, vs, ring)
        engine.apply_update(upd)
        mats[k - 1] = mats[k - 1] + sum(np.outer(u, v) for u, v in zip(us, vs))
        m.tuples_processed += upd.size()
        m.batches += 1
    m.wall_seconds = time.perf_counter() - start
    m.counters = engine.read_counters()
    m.observe_views(engine.view_entry_counts())
    expected = mats[0]
    for M in mats[1:]:
        expected = expected @ M
    result = result_matrix(engine.root(), expected.shape[0], expected.shape[1], n)
    err = float(np.max(np.abs(result - expected))) if expected.size else 0.0
    m.extra["max_abs_error"] = err
    scale = max(1.0, float(np.max(np.abs(expected))))
    if err > tol * scale:
        raise OracleDivergence(f"maintained chain product differs from recomputation by {err:g}")
    return ChainRun(m, result, expected, err)
