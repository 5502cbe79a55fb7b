"""View trees: one view per variable, one leaf per relation."""

from __future__ import annotations

import copy
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

from ringivm.core.lifting import LiftingFunction
from ringivm.core.relation import Relation, indicator_project, join_aggregate
from ringivm.core.ring import OpCounters, Ring
from ringivm.core.schema import Schema
from ringivm.errors import MissingRelation, UnknownRelation
from ringivm.planner.order import BoundOrder
from ringivm.planner.query import QuerySpec

VIEW, LEAF, INDICATOR = "view", "leaf", "indicator"


def rels_label(rels) -> str:
    names = sorted(rels)
    return ("" if all(len(n) == 1 for n in names) else ",").join(names)


@dataclass(eq=False)
class ViewNode:
    """A node of a view tree.

    Views join their children in order and then marginalize ``marginalized``
    (in that order). Leaves are base relations; indicators are ``∃_keys R``.
    ``payload_vars`` is set in factorized-payload mode: each payload is then
    projected onto those variables.
    """

    id: str
    kind: str
    keys: tuple[str, ...]
    schema: Schema
    rels: frozenset[str]
    var: str | None = None
    vars: tuple[str, ...] = ()
    marginalized: tuple[str, ...] = ()
    children: list["ViewNode"] = field(default_factory=list)
    relation: str | None = None
    payload_vars: tuple[str, ...] | None = None
    parent: "ViewNode | None" = field(default=None, repr=False)

    @property
    def is_view(self) -> bool:
        return self.kind == VIEW

    def walk(self) -> Iterator["ViewNode"]:
        """Post-order traversal (children before parents)."""
        for c in self.children:
            yield from c.walk()
        yield self

    def depends_on(self) -> frozenset[str]:
        """Relations whose updates change this node, indicators included."""
        out = set(self.rels)
        for n in self.walk():
            if n.kind == INDICATOR:
                out.add(n.relation)
        return frozenset(out)

    def definition(self) -> str:
        if self.kind == LEAF:
            return f"base {self.relation}"
        if self.kind == INDICATOR:
            return f"EXISTS[{','.join(self.keys)}] {self.relation}"
        body = " * ".join(c.id for c in self.children) or "1"
        if self.marginalized:
            body = f"SUM[{','.join(self.marginalized)}]({body})"
        if self.payload_vars is not None:
            body = f"PAYLOAD[{','.join(self.payload_vars)}]({body})"
        return body


class ViewTree:
    def __init__(self, root: ViewNode, query: QuerySpec, order: BoundOrder, key_free: frozenset[str],
                 liftings: Mapping[str, LiftingFunction], factorized: bool = False):
        self.root = root
        self.query = query
        self.order = order
        self.key_free = frozenset(key_free)
        self.liftings = dict(liftings)
        self.factorized = factorized
        self.reindex()

    @property
    def ring(self) -> Ring:
        return self.query.ring

    def reindex(self) -> None:
        self.root.parent = None
        self.nodes: dict[str, ViewNode] = {}
        self.leaves: dict[str, ViewNode] = {}
        self.indicators: dict[str, ViewNode] = {}
        for n in self.root.walk():
            for c in n.children:
                c.parent = n
            if n.id in self.nodes:
                raise ValueError(f"duplicate view id {n.id!r}")
            self.nodes[n.id] = n
            if n.kind == LEAF:
                self.leaves[n.relation] = n
            elif n.kind == INDICATOR:
                self.indicators[n.id] = n

    def views(self) -> list[ViewNode]:
        return [n for n in self.root.walk() if n.is_view]

    def path(self, node_id: str) -> list[ViewNode]:
        """Nodes from ``node_id`` up to the root, inclusive."""
        n = self.nodes[node_id]
        out = []
        while n is not None:
            out.append(n)
            n = n.parent
        return out

    def leaf(self, relation: str) -> ViewNode:
        try:
            return self.leaves[relation]
        except KeyError:
            raise UnknownRelation(f"relation {relation!r} is not a leaf of the view tree") from None

    def copy(self) -> "ViewTree":
        new = copy.copy(self)
        new.root = _clone(self.root)
        new.reindex()
        return new


def _clone(n: ViewNode) -> ViewNode:
    m = copy.copy(n)
    m.children = [_clone(c) for c in n.children]
    return m


# ---------------------------------------------------------------------------
# construction


def build_view_tree(query: QuerySpec, order: BoundOrder, key_free=None,
                    liftings: Mapping[str, LiftingFunction] | None = None,
                    factorized: bool = False, dedup: bool = True) -> ViewTree:
    """Build the view tree of ``query`` over ``order``.

    ``key_free`` is the set of variables kept in view keys; by default the
    query's free variables. Relational-payload plans pass the empty set so
    every variable moves into the payloads.
    """
    F = frozenset(query.free if key_free is None else key_free)
    schema = query.schema
    rel_schema = {r.name: r.schema for r in query.relations}

    def leaf(r: str) -> ViewNode:
        s = rel_schema[r]
        return ViewNode(r, LEAF, s.variables, s, frozenset([r]), relation=r)

    def build(x: str) -> ViewNode:
        kids = [build(c) for c in order.children[x]]
        kids += [leaf(r) for r in order.relations_at.get(x, [])]
        child_keys = set().union(*(k.keys for k in kids))
        keys = tuple(sorted(order.dep(x) | (F & child_keys)))
        rels = frozenset().union(*(k.rels for k in kids))
        marg = () if x in F else (x,)
        return ViewNode(f"V@{x}_{rels_label(rels)}", VIEW, keys, schema.project(keys), rels,
                        var=x, vars=(x,), marginalized=marg, children=kids)

    tops = [build(r) for r in order.roots] + [leaf(r) for r in order.relations_at.get(None, [])]
    if len(tops) == 1 and tops[0].is_view:
        root = tops[0]
    else:
        # forest: a super-root joins the independent trees
        keys = tuple(sorted(set().union(*(t.keys for t in tops))))
        rels = frozenset().union(*(t.rels for t in tops))
        root = ViewNode(f"V@*_{rels_label(rels)}", VIEW, keys, schema.project(keys), rels,
                        children=tops)
    if factorized:
        for n in root.walk():
            if n.is_view:
                n.payload_vars = tuple(v for v in n.vars if v in query.free)
    tree = ViewTree(root, query, order, F, liftings if liftings is not None else query.liftings, factorized)
    return dedup_views(tree) if dedup else tree


def dedup_views(tree: ViewTree) -> ViewTree:
    """Merge a free-variable view into its single child view when their keys agree.

    Such a view only re-exposes its child, so the top view takes over the
    child's definition and the child disappears.
    """
    tree = tree.copy()
    for n in list(tree.root.walk()):
        while (n.is_view and not n.marginalized and n.var is not None and len(n.children) == 1
               and n.children[0].is_view and n.children[0].keys == n.keys):
            c = n.children[0]
            n.children = c.children
            n.marginalized = c.marginalized
            n.vars = n.vars + c.vars
            if n.payload_vars is not None:
                n.payload_vars = tuple(v for v in n.vars if v in tree.query.free)
    tree.reindex()
    return tree


def compose_chains(tree: ViewTree) -> ViewTree:
    """Fuse chains of single-child marginalizing views over one relation."""
    tree = tree.copy()
    for n in list(tree.root.walk()):
        while (n.is_view and n.marginalized and len(n.children) == 1):
            c = n.children[0]
            if not (c.is_view and c.marginalized and len(c.children) == 1 and len(c.rels) == 1):
                break
            if c.children[0].kind == INDICATOR:
                break
            n.children = c.children
            n.marginalized = c.marginalized + n.marginalized
            n.vars = n.vars + c.vars
            if n.payload_vars is not None:
                n.payload_vars = tuple(v for v in n.vars if v in tree.query.free)
    tree.reindex()
    return tree


# ---------------------------------------------------------------------------
# bottom-up evaluation


def project_payloads(rel: Relation, keep: tuple[str, ...]) -> Relation:
    """Factorized-payload step: project every relational payload onto ``keep``."""
    from ringivm.rings.relational import factorized_marginalize_payload

    out = {}
    for k, p in rel.items():
        vs = [v for v in keep if v in p.schema]
        out[k] = factorized_marginalize_payload(p, vs) if len(vs) < len(p.schema) else p
    return Relation(rel.schema, rel.ring, out)


def compute_node(node: ViewNode, operands: list, tree: ViewTree, ring: Ring,
                 counters: OpCounters | None = None) -> Relation:
    """Apply a view's definition to already computed child relations."""
    out = join_aggregate(operands, node.marginalized, tree.liftings, ring, counters, node.schema)
    if node.payload_vars is not None:
        out = project_payloads(out, node.payload_vars)
    return out


def evaluate_tree(tree: ViewTree, database: Mapping[str, Relation],
                  ring: Ring | None = None) -> dict[str, Relation]:
    """Evaluate every node bottom-up; ``database`` maps relation names to relations."""
    ring = ring or tree.ring
    results: dict[str, Relation] = {}
    for n in tree.root.walk():
        if n.kind == LEAF:
            if n.relation not in database:
                raise MissingRelation(f"no data for relation {n.relation!r}")
            results[n.id] = database[n.relation]
        elif n.kind == INDICATOR:
            if n.relation not in database:
                raise MissingRelation(f"no data for relation {n.relation!r}")
            results[n.id] = indicator_project(database[n.relation], n.keys)
        else:
            results[n.id] = compute_node(n, [results[c.id] for c in n.children], tree, ring)
    return results
