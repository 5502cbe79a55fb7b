"""Delta trees: the leaf-to-root maintenance path for one changing relation."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from ringivm.errors import BadFactorization, UnknownRelation
from ringivm.planner.viewtree import ViewNode, ViewTree


@dataclass(frozen=True)
class DeltaStep:
    """``δnode = SUM_marg(children with child ``changed`` replaced by its delta)``."""

    node: ViewNode
    changed: int

    @property
    def siblings(self) -> list[ViewNode]:
        return [c for i, c in enumerate(self.node.children) if i != self.changed]

    def formula(self) -> str:
        parts = [f"d{c.id}" if i == self.changed else c.id for i, c in enumerate(self.node.children)]
        body = " * ".join(parts)
        if self.node.marginalized:
            body = f"SUM[{','.join(self.node.marginalized)}]({body})"
        if self.node.payload_vars is not None:
            body = f"PAYLOAD[{','.join(self.node.payload_vars)}]({body})"
        return f"d{self.node.id} = {body}"


@dataclass(frozen=True)
class FactorGroup:
    """One independent sub-aggregate of a factorized delta step.

    Joins the incoming factors ``factors`` with the sibling children at
    ``siblings`` (indices into the node's children) and marginalizes
    ``marginalized``. Groups with nothing to marginalize and a single factor
    pass it through unchanged.
    """

    factors: tuple[int, ...]
    siblings: tuple[int, ...]
    marginalized: tuple[str, ...]
    out_vars: tuple[str, ...]


@dataclass(frozen=True)
class FactorizedStep:
    step: DeltaStep
    groups: tuple[FactorGroup, ...]


@dataclass
class DeltaTree:
    tree: ViewTree
    target: str  # leaf relation name or indicator id
    source: ViewNode
    steps: list[DeltaStep]
    shape: tuple[tuple[str, ...], ...] | None = None
    factorized_form: list[FactorizedStep] | None = field(default=None)

    def formulas(self) -> list[str]:
        return [s.formula() for s in self.steps]


def build_delta_tree(tree: ViewTree, relation: str) -> DeltaTree:
    """Delta path for a leaf relation or an indicator id."""
    if relation in tree.leaves:
        src = tree.leaves[relation]
    elif relation in tree.indicators:
        src = tree.indicators[relation]
    else:
        raise UnknownRelation(f"{relation!r} is neither a leaf nor an indicator of the view tree")
    steps = []
    child = src
    while child.parent is not None:
        parent = child.parent
        steps.append(DeltaStep(parent, next(i for i, c in enumerate(parent.children) if c is child)))
        child = parent
    return DeltaTree(tree, relation, src, steps)


def check_shape(schema_vars: Sequence[str], shape: Sequence[Sequence[str]]) -> tuple[tuple[str, ...], ...]:
    groups = tuple(tuple(sorted(g)) for g in shape)
    flat = [v for g in groups for v in g]
    if any(not g for g in groups) or len(flat) != len(set(flat)) or set(flat) != set(schema_vars):
        raise BadFactorization(
            f"factor schemas {[list(g) for g in groups]} do not partition {sorted(schema_vars)}"
        )
    return groups


def optimize_delta(d: DeltaTree, shape: Sequence[Sequence[str]] | None) -> DeltaTree:
    """Rewrite the path to keep a factorized delta as a product of sub-aggregates.

    At each step the incoming factors and the sibling views are split into
    connected components over shared variables; each component is joined on
    its own and marginalized where it holds the node's marginalized
    variables. Listing-shaped deltas come back unchanged, as do paths that
    need a commutative ring or project payloads.
    """
    if shape is None:
        return d
    groups = check_shape(d.source.keys, shape)
    out = DeltaTree(d.tree, d.target, d.source, d.steps, groups, None)
    if not d.tree.ring.commutative or any(s.node.payload_vars is not None for s in d.steps):
        return out
    current = [frozenset(g) for g in groups]
    form = []
    for step in d.steps:
        items: list[tuple[str, int, frozenset]] = [("f", i, s) for i, s in enumerate(current)]
        items += [("s", i, frozenset(c.keys)) for i, c in enumerate(step.node.children) if i != step.changed]
        parent = list(range(len(items)))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        owner: dict[str, int] = {}
        for idx, (_, _, vs) in enumerate(items):
            for v in vs:
                if v in owner:
                    parent[find(idx)] = find(owner[v])
                else:
                    owner[v] = idx
        comps: dict[int, list[int]] = {}
        for idx in range(len(items)):
            comps.setdefault(find(idx), []).append(idx)
        fgroups = []
        nxt = []
        for members in sorted(comps.values()):
            vs = frozenset().union(*(items[m][2] for m in members))
            marg = tuple(x for x in step.node.marginalized if x in vs)
            outv = tuple(sorted(vs - set(marg)))
            fgroups.append(FactorGroup(
                tuple(items[m][1] for m in members if items[m][0] == "f"),
                tuple(items[m][1] for m in members if items[m][0] == "s"),
                marg, outv,
            ))
            nxt.append(frozenset(outv))
        form.append(FactorizedStep(step, tuple(fgroups)))
        current = nxt
    out.factorized_form = form
    return out


def describe_factorized(d: DeltaTree) -> list[str]:
    """Readable form of the rewritten path, one line per step.

    Each factor is written out in full, so the last line shows the root delta
    as a product of independent sub-aggregates over the original factors.
    """
    if d.factorized_form is None:
        return d.formulas()
    lines = []
    exprs = [f"d{d.target}_{''.join(g)}" for g in d.shape]
    for fs in d.factorized_form:
        new_exprs = []
        for g in fs.groups:
            terms = [exprs[i] for i in g.factors] + [fs.step.node.children[i].id for i in g.siblings]
            body = " * ".join(terms) or "1"
            if g.marginalized:
                body = f"SUM[{','.join(g.marginalized)}]({body})"
            elif len(terms) > 1:
                body = f"({body})"
            new_exprs.append(body)
        lines.append(f"d{fs.step.node.id} = " + " * ".join(new_exprs))
        exprs = new_exprs
    return lines
