"""Indicator projections that constrain views of cyclic queries."""

from __future__ import annotations

from ringivm.planner.hypergraph import gyo_reduce
from ringivm.planner.viewtree import INDICATOR, ViewNode, ViewTree


def indicator_id(relation: str, keys) -> str:
    return f"I[{','.join(sorted(keys))}]{relation}"


def add_indicators(tree: ViewTree) -> ViewTree:
    """One bottom-up pass attaching indicators that close cycles with a view's children.

    At each view the candidates are ``∃_pk R`` for relations outside the view
    with ``pk = sch(R) ∩ keys`` non-empty; candidates left in the GYO residue
    of candidates plus children become indicator children.
    """
    tree = tree.copy()
    schemas = {r.name: set(r.schema.variables) for r in tree.query.relations}
    used: set[str] = set()
    for n in list(tree.root.walk()):
        if not n.is_view:
            continue
        keys = set(n.keys)
        edges = {}
        for i, c in enumerate(n.children):
            # "0:" sorts children ahead of candidates so ties keep the child
            edges[f"0:{i:04d}:{c.id}"] = c.keys
        cands = {}
        for r, sch in schemas.items():
            pk = sch & keys
            if r in n.rels or not pk:
                continue
            label = f"1:{indicator_id(r, pk)}"
            cands[label] = (r, tuple(sorted(pk)))
            edges[label] = pk
        if not cands:
            continue
        residue = gyo_reduce(edges)
        for label in residue.labels():
            if label not in cands:
                continue
            r, pk = cands[label]
            nid = indicator_id(r, pk)
            k = 2
            while nid in used:
                nid = f"{indicator_id(r, pk)}#{k}"
                k += 1
            used.add(nid)
            schema = tree.query.relation(r).schema.project(pk)
            n.children.append(ViewNode(nid, INDICATOR, pk, schema, frozenset(), relation=r))
    tree.reindex()
    return tree
