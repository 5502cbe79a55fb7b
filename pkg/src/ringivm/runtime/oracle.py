"""Recomputation oracle: evaluates views from base relations by nested loops.

The oracle does not reuse the join machinery of the delta path. For each view
it enumerates the flat join of the relations (and indicators) below it with a
backtracking nested loop, multiplies payloads in leaf order, applies the
lifts of every variable summed away inside the view and groups by the view's
keys.
"""

from __future__ import annotations

from collections.abc import Mapping

from ringivm.core.relation import Relation
from ringivm.planner.plan import Plan
from ringivm.planner.viewtree import INDICATOR, LEAF, ViewNode, evaluate_tree


def _leaves(node: ViewNode) -> list[ViewNode]:
    return [n for n in node.walk() if n.kind in (LEAF, INDICATOR)]


def _marginalized_below(node: ViewNode) -> list[str]:
    # bottom-up order, matching when each lift multiplies in
    return [x for n in node.walk() if n.is_view for x in n.marginalized]


def _flat_join(operands: list[tuple[tuple[str, ...], list[tuple[tuple, object]]]], ring):
    """Yield ``(binding, payload product)`` for every combination that agrees on shared variables.

    Each operand is probed through a hash map on the variables fixed by the
    operands before it.
    """
    seen: set[str] = set()
    probes = []
    for variables, rows in operands:
        shared = [i for i, v in enumerate(variables) if v in seen]
        fresh = [(i, v) for i, v in enumerate(variables) if v not in seen]
        table: dict = {}
        for key, p in rows:
            table.setdefault(tuple(key[i] for i in shared), []).append((key, p))
        probes.append(([variables[i] for i in shared], fresh, table))
        seen.update(variables)
    binding: dict = {}
    n = len(probes)

    def rec(i: int, acc):
        if i == n:
            yield dict(binding), acc
            return
        shared, fresh, table = probes[i]
        for key, p in table.get(tuple(binding[v] for v in shared), ()):
            for j, v in fresh:
                binding[v] = key[j]
            yield from rec(i + 1, p if acc is None else ring.mul(acc, p))
        for _, v in fresh:
            binding.pop(v, None)

    yield from rec(0, None)


def oracle_view(plan: Plan, node: ViewNode, base: Mapping[str, Relation]) -> Relation:
    tree = plan.tree
    ring = plan.ring
    operands = []
    for leaf in _leaves(node):
        rel = base[leaf.relation]
        if leaf.kind == LEAF:
            rows = sorted(rel.items(), key=lambda kv: kv[0])
            operands.append((rel.schema.variables, rows))
        else:
            pos = rel.schema.positions(leaf.keys)
            keys = sorted({tuple(k[i] for i in pos) for k in rel})
            operands.append((leaf.keys, [(k, ring.one) for k in keys]))
    marg = _marginalized_below(node)
    out: dict = {}
    for binding, p in _flat_join(operands, ring):
        if p is None:
            p = ring.one
        for x in marg:
            p = ring.mul(p, tree.liftings[x](binding[x]))
        k = tuple(binding[v] for v in node.keys)
        out[k] = ring.add(out[k], p) if k in out else p
    result = Relation(node.schema, ring, out)
    if node.payload_vars is not None:
        from ringivm.planner.viewtree import project_payloads

        result = project_payloads(result, node.payload_vars)
    return result


def evaluate_oracle(plan: Plan, base: Mapping[str, Relation], views: bool = False,
                    mode: str = "nested") -> Relation | dict[str, Relation]:
    """Recompute the root (or every materialized view when ``views``) from ``base``.

    ``base`` maps occurrence names to relations. ``mode="bottom-up"`` uses the
    planner's tree evaluation instead of nested loops.
    """
    targets = sorted(plan.materialized) if views else [plan.root.id]
    if mode == "bottom-up":
        vals = evaluate_tree(plan.tree, base, plan.ring)
        out = {t: vals[t] for t in targets}
    elif mode == "nested":
        out = {t: oracle_view(plan, plan.tree.nodes[t], base) for t in targets}
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    return out if views else out[plan.root.id]


def divergences(plan: Plan, engine_views: Mapping[str, Relation], base: Mapping[str, Relation],
                tol: float = 0.0) -> list[str]:
    """Ids of materialized views whose maintained value differs from the oracle."""
    expected = evaluate_oracle(plan, base, views=True)
    return [v for v, rel in expected.items() if not rel.close_to(engine_views[v], tol)]
