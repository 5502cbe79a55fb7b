"""Choosing which views to store for a given update workload."""

from __future__ import annotations

from collections.abc import Iterable

from ringivm.planner.viewtree import ViewNode, ViewTree


def choose_materialization(tree: ViewTree, updatable: Iterable[str]) -> frozenset[str]:
    """Ids of the views to store when ``updatable`` relations receive updates.

    The root is always stored. A child view is stored when one of its
    siblings can change, since that sibling's delta must then be joined with
    it. Leaves and indicators are stored by the engine regardless and never
    appear in the result.
    """
    u = frozenset(updatable)
    chosen = {tree.root.id}

    def visit(n: ViewNode) -> None:
        deps = [c.depends_on() & u for c in n.children]
        for i, c in enumerate(n.children):
            if c.is_view and any(deps[j] for j in range(len(n.children)) if j != i):
                chosen.add(c.id)
            visit(c)

    visit(tree.root)
    return frozenset(chosen)
