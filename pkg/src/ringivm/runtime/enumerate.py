"""Enumeration of a result kept as factorized payloads."""

from __future__ import annotations

from collections.abc import Iterator

from ringivm.errors import ModeMismatch
from ringivm.planner.plan import FACTORIZED
from ringivm.planner.viewtree import INDICATOR, ViewNode


def enumerate_factorized(engine) -> Iterator[tuple[tuple, int]]:
    """Yield ``(tuple over the free variables, multiplicity)`` once per result tuple.

    Walks the payload hierarchy depth first: a view's payload values fix its
    variables, which then key the lookups into its children.
    """
    plan = engine.plan
    if plan.mode != FACTORIZED:
        raise ModeMismatch("enumeration needs a plan compiled with factorized payloads")
    free = sorted(plan.query.free)
    with engine.lock.read():
        for binding, m in _node(engine, plan.root, {}):
            yield tuple(binding[v] for v in free), m


def _node(engine, node: ViewNode, ctx: dict) -> Iterator[tuple[dict, int]]:
    if node.kind == INDICATOR:
        yield {}, 1
        return
    p = engine.stores[node.id].get(tuple(ctx[v] for v in node.keys))
    if p is None:
        return
    if not len(p.schema):
        yield {}, p[()]
        return
    variables = p.schema.variables
    for t, m in p.sorted_items():
        bound = dict(zip(variables, t))
        inner = {**ctx, **bound}
        kids = [c for c in node.children if c.kind != INDICATOR]
        if not kids:
            yield bound, m
            continue
        for extra, mult in _product(engine, kids, 0, inner):
            yield {**bound, **extra}, mult


def _product(engine, kids: list[ViewNode], i: int, ctx: dict) -> Iterator[tuple[dict, int]]:
    if i == len(kids):
        yield {}, 1
        return
    for b, m in _node(engine, kids[i], ctx):
        merged = {**ctx, **b}
        for rest, m2 in _product(engine, kids, i + 1, merged):
            yield {**b, **rest}, m * m2
