"""Compilation of a query and variable order into a maintenance plan."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from ringivm.core.ring import base_ring
from ringivm.errors import ModeMismatch, NotUpdatable, UnknownRelation
from ringivm.planner.delta import DeltaTree, build_delta_tree, optimize_delta
from ringivm.planner.indicators import add_indicators
from ringivm.planner.materialize import choose_materialization
from ringivm.planner.order import BoundOrder, VariableOrder
from ringivm.planner.query import QuerySpec
from ringivm.planner.viewtree import ViewNode, ViewTree, build_view_tree, compose_chains

LISTING, FACTORIZED = "listing", "factorized"


@dataclass
class Plan:
    query: QuerySpec
    order: BoundOrder
    tree: ViewTree
    mode: str
    materialized: frozenset[str]
    updatable: frozenset[str]  # occurrence names
    deltas: dict[str, DeltaTree] = field(default_factory=dict)
    _optimized: dict = field(default_factory=dict, repr=False)

    @property
    def ring(self):
        return self.query.ring

    @property
    def root(self) -> ViewNode:
        return self.tree.root

    def delta(self, target: str, shape: Sequence[Sequence[str]] | None = None) -> DeltaTree:
        """The delta path for a leaf or indicator, optimized for ``shape`` if given."""
        if target not in self.deltas:
            if target in self.tree.leaves:
                raise NotUpdatable(f"relation {target!r} is not updatable in this plan")
            raise UnknownRelation(f"no delta path for {target!r}")
        if shape is None:
            return self.deltas[target]
        key = (target, tuple(tuple(sorted(g)) for g in shape))
        if key not in self._optimized:
            self._optimized[key] = optimize_delta(self.deltas[target], shape)
        return self._optimized[key]

    def indicators_of(self, relation: str) -> list[ViewNode]:
        return sorted((n for n in self.tree.indicators.values() if n.relation == relation),
                      key=lambda n: n.id)

    def dump(self) -> str:
        q = self.query
        lines = ["plan", f"  mode: {self.mode}", f"  ring: {base_ring(q.ring).name}",
                 f"  free: [{','.join(sorted(q.free))}]",
                 f"  order: {self.order.to_text()}",
                 "  placement: " + " ".join(f"{r}@{self.order.placement[r] or '*'}" for r in q.names),
                 f"  updatable: [{','.join(sorted(self.updatable))}]"]
        ring = base_ring(q.ring)
        if hasattr(ring, "index") and hasattr(ring, "m"):
            lines.append("  variables: " + " ".join(f"{v}={i}" for v, i in ring.index.items()))
        lines.append("views")

        def visit(n: ViewNode, depth: int) -> None:
            pad = "  " * (depth + 1)
            if n.is_view:
                mat = "yes" if n.id in self.materialized else "no"
                lines.append(f"{pad}{n.id} keys=[{','.join(n.keys)}] rels=[{','.join(sorted(n.rels))}] "
                             f"materialized={mat}")
                lines.append(f"{pad}  def: {n.definition()}")
                inds = [c.id for c in n.children if c.kind == "indicator"]
                lines.append(f"{pad}  indicators: [{','.join(inds)}]")
            else:
                lines.append(f"{pad}{n.id} keys=[{','.join(n.keys)}] {n.definition()}")
            for c in n.children:
                visit(c, depth + 1)

        visit(self.tree.root, 0)
        lines.append("deltas")
        for target in sorted(self.deltas):
            lines.append(f"  {target}")
            for f in self.deltas[target].formulas():
                lines.append(f"    {f}")
        return "\n".join(lines) + "\n"


def compile_plan(
    query: QuerySpec,
    order: VariableOrder,
    mode: str = LISTING,
    indicators: bool = True,
    compose: bool = True,
    updatable: Iterable[str] | None = None,
) -> Plan:
    """Build the view tree, indicators, materialization set and delta paths.

    ``updatable`` lists relation occurrences that accept updates (default:
    those of the query's updatable sources). Relational-payload rings keep no
    variables in view keys and lift free variables into the payloads.
    """
    from ringivm.rings.relational import RelationalRing

    ring = base_ring(query.ring)
    relational = isinstance(ring, RelationalRing)
    if mode not in (LISTING, FACTORIZED):
        raise ModeMismatch(f"unknown plan mode {mode!r}")
    if mode == FACTORIZED and not relational:
        raise ModeMismatch("factorized payloads need the relational ring")
    schemas = {r.name: r.schema.variables for r in query.relations}
    bound = order.bind(schemas, query.free, factorized=mode == FACTORIZED)
    if relational:
        liftings = ring.catalog(query.variables, query.free)
        liftings.update({k: v for k, v in query.liftings.items() if k not in query.free})
        tree = build_view_tree(query, bound, key_free=frozenset(), liftings=liftings,
                               factorized=mode == FACTORIZED)
    else:
        tree = build_view_tree(query, bound)
    if indicators:
        tree = add_indicators(tree)
    if compose and mode == LISTING:
        tree = compose_chains(tree)
    upd = frozenset(updatable) if updatable is not None else query.updatable_relations()
    unknown = sorted(upd - set(query.names))
    if unknown:
        raise UnknownRelation(f"updatable relations {unknown} are not in the query")
    if mode == FACTORIZED:
        mat = frozenset(n.id for n in tree.views())
    else:
        mat = choose_materialization(tree, upd)
    plan = Plan(query, bound, tree, mode, mat, upd)
    for r in sorted(upd):
        plan.deltas[r] = build_delta_tree(tree, r)
    for ind in tree.indicators.values():
        if ind.relation in upd:
            plan.deltas[ind.id] = build_delta_tree(tree, ind.id)
    return plan
