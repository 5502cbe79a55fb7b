"""Variable orders: rooted forests over the query variables."""

from __future__ import annotations

import re
import warnings
from collections.abc import Iterable, Mapping, Sequence

from ringivm.errors import InvalidVariableOrder, ParseError


class VariableOrder:
    """A forest of variables with relation placements.

    ``parents`` maps each variable to its parent (``None`` for roots). Children
    keep the order in which they appear in ``parents``. ``placement`` maps a
    relation to the variable it hangs under; unplaced relations go under their
    lowest variable once :meth:`bind` is called.
    """

    def __init__(self, parents: Mapping[str, str | None], placement: Mapping[str, str] | None = None):
        self.parents: dict[str, str | None] = dict(parents)
        for v, p in self.parents.items():
            if p is not None and p not in self.parents:
                raise InvalidVariableOrder(f"parent {p!r} of {v!r} is not a variable of the order")
        self.children: dict[str, list[str]] = {v: [] for v in self.parents}
        self.roots: list[str] = []
        for v, p in self.parents.items():
            (self.roots if p is None else self.children[p]).append(v)
        self._check_acyclic()
        self.placement: dict[str, str | None] = dict(placement or {})
        self._depth = {}
        for r in self.roots:
            self._fill_depth(r, 0)

    def _check_acyclic(self) -> None:
        for v in self.parents:
            seen = {v}
            p = self.parents[v]
            while p is not None:
                if p in seen:
                    raise InvalidVariableOrder(f"cycle in variable order through {p!r}")
                seen.add(p)
                p = self.parents[p]

    def _fill_depth(self, v: str, d: int) -> None:
        stack = [(v, d)]
        while stack:
            x, dx = stack.pop()
            self._depth[x] = dx
            stack.extend((c, dx + 1) for c in self.children[x])

    @classmethod
    def parse(cls, text: str, placement: Mapping[str, str] | None = None) -> "VariableOrder":
        """Parse the nested form ``A(B, C(D, E))``; several roots separate by commas."""
        tokens = re.findall(r"[A-Za-z_][A-Za-z0-9_]*|[(),]|\S", text)
        parents: dict[str, str | None] = {}
        pos = 0

        def forest(parent: str | None) -> None:
            nonlocal pos
            while True:
                if pos >= len(tokens) or not re.match(r"[A-Za-z_]", tokens[pos]):
                    raise ParseError(f"expected a variable name in order {text!r}")
                name = tokens[pos]
                pos += 1
                if name in parents:
                    raise InvalidVariableOrder(f"variable {name!r} appears twice in {text!r}")
                parents[name] = parent
                if pos < len(tokens) and tokens[pos] == "(":
                    pos += 1
                    forest(name)
                    if pos >= len(tokens) or tokens[pos] != ")":
                        raise ParseError(f"unbalanced parentheses in order {text!r}")
                    pos += 1
                if pos < len(tokens) and tokens[pos] == ",":
                    pos += 1
                    continue
                return

        if not tokens:
            return cls({}, placement)
        forest(None)
        if pos != len(tokens):
            raise ParseError(f"unexpected {tokens[pos]!r} in order {text!r}")
        return cls(parents, placement)

    @classmethod
    def chain(cls, variables: Sequence[str], placement: Mapping[str, str] | None = None) -> "VariableOrder":
        parents = {}
        prev = None
        for v in variables:
            parents[v] = prev
            prev = v
        return cls(parents, placement)

    # -- structure -------------------------------------------------------
    @property
    def variables(self) -> list[str]:
        return list(self.parents)

    def depth(self, v: str) -> int:
        return self._depth[v]

    def ancestors(self, v: str) -> list[str]:
        """Strict ancestors, nearest first."""
        out = []
        p = self.parents[v]
        while p is not None:
            out.append(p)
            p = self.parents[p]
        return out

    def subtree(self, v: str) -> list[str]:
        out, stack = [], [v]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(reversed(self.children[x]))
        return out

    def on_path(self, variables: Iterable[str]) -> bool:
        vs = sorted(set(variables), key=lambda v: self._depth[v])
        return all(vs[i] in self.ancestors(vs[i + 1]) for i in range(len(vs) - 1))

    def lowest(self, variables: Iterable[str]) -> str | None:
        vs = list(variables)
        return max(vs, key=lambda v: self._depth[v]) if vs else None

    # -- binding to a query ---------------------------------------------
    def bind(self, schemas: Mapping[str, Iterable[str]], free: Iterable[str] = (),
             factorized: bool = False) -> "VariableOrder":
        """Validate against relation schemas and fill in default placements.

        Raises :class:`InvalidVariableOrder` naming the violated constraint.
        """
        schemas = {r: list(s) for r, s in schemas.items()}
        all_vars = set().union(*schemas.values()) if schemas else set()
        unknown = sorted(all_vars - set(self.parents))
        if unknown:
            raise InvalidVariableOrder(f"query variables {unknown} are missing from the order")
        extra = sorted(set(self.parents) - all_vars)
        if extra:
            raise InvalidVariableOrder(f"order variables {extra} occur in no relation")
        bad = sorted(set(self.placement) - set(schemas))
        if bad:
            raise InvalidVariableOrder(f"placement given for unknown relations {bad}")
        placement: dict[str, str | None] = {}
        for r, vs in schemas.items():
            if not self.on_path(vs):
                raise InvalidVariableOrder(
                    f"variables {sorted(vs)} of relation {r!r} do not lie on one root-to-leaf path"
                )
            at = self.placement.get(r) or self.lowest(vs)
            if at is not None:
                if at not in self.parents:
                    raise InvalidVariableOrder(f"relation {r!r} placed under unknown variable {at!r}")
                reach = {at, *self.ancestors(at)}
                if not set(vs) <= reach:
                    raise InvalidVariableOrder(
                        f"relation {r!r} placed under {at!r} but {sorted(set(vs) - reach)} are not on its path"
                    )
            placement[r] = at
        bound = BoundOrder(self, schemas, placement)
        bound.check_free_on_top(set(free), factorized)
        return bound

    def to_text(self) -> str:
        def render(v: str) -> str:
            kids = self.children[v]
            return v + ("(" + ", ".join(render(c) for c in kids) + ")" if kids else "")

        return ", ".join(render(r) for r in self.roots)

    def __repr__(self) -> str:
        return f"VariableOrder({self.to_text()!r})"


class BoundOrder(VariableOrder):
    """A variable order validated for one query, with placements and ``dep``."""

    def __init__(self, order: VariableOrder, schemas: Mapping[str, list[str]],
                 placement: Mapping[str, str | None]):
        super().__init__(order.parents, placement)
        self.schemas = {r: tuple(sorted(s)) for r, s in schemas.items()}
        # relations hanging under each variable, by declaration order
        self.relations_at: dict[str | None, list[str]] = {}
        for r in schemas:
            self.relations_at.setdefault(placement[r], []).append(r)
        self._dep = {v: self._compute_dep(v) for v in self.parents}

    def relations_in_subtree(self, v: str) -> list[str]:
        sub = set(self.subtree(v))
        return [r for r, at in self.placement.items() if at in sub]

    def _compute_dep(self, v: str) -> frozenset[str]:
        anc = set(self.ancestors(v))
        touched = set()
        for r in self.relations_in_subtree(v):
            touched.update(self.schemas[r])
        return frozenset(anc & touched)

    def dep(self, v: str) -> frozenset[str]:
        return self._dep[v]

    def check_free_on_top(self, free: set[str], factorized: bool) -> None:
        for v in self.parents:
            if v in free:
                continue
            for x in self.subtree(v):
                if x in free:
                    msg = f"free variable {x!r} lies below bound variable {v!r}"
                    if factorized:
                        raise InvalidVariableOrder(msg + " (factorized payloads need free variables on top)")
                    warnings.warn(msg, stacklevel=3)
                    return
