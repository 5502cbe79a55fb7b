"""Hypergraphs and the GYO ear-removal reduction."""

from __future__ import annotations

from collections.abc import Iterable, Mapping


class Hypergraph:
    """Labelled hyperedges over variables; labels order deterministic choices."""

    def __init__(self, edges: Mapping[str, Iterable[str]] | None = None):
        self.edges: dict[str, frozenset[str]] = {k: frozenset(v) for k, v in (edges or {}).items()}

    def labels(self) -> list[str]:
        return sorted(self.edges)

    def __len__(self) -> int:
        return len(self.edges)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Hypergraph) and self.edges == other.edges

    def __repr__(self) -> str:
        body = ", ".join(f"{k}({','.join(sorted(v))})" for k, v in sorted(self.edges.items()))
        return f"Hypergraph({body})"


def gyo_reduce(h: Hypergraph | Mapping[str, Iterable[str]]) -> Hypergraph:
    """Remove isolated variables and contained edges until nothing changes.

    An edge contained in another is dropped; of two equal edges the one with
    the larger label goes. The result is empty iff the hypergraph is acyclic.
    """
    edges = dict((h if isinstance(h, Hypergraph) else Hypergraph(h)).edges)
    changed = True
    while changed:
        changed = False
        occurs: dict[str, int] = {}
        for vs in edges.values():
            for v in vs:
                occurs[v] = occurs.get(v, 0) + 1
        for label in sorted(edges):
            keep = frozenset(v for v in edges[label] if occurs[v] > 1)
            if keep != edges[label]:
                edges[label] = keep
                changed = True
        for label in sorted(edges):
            vs = edges[label]
            if not vs:
                del edges[label]
                changed = True
                continue
            for other in sorted(edges):
                if other == label:
                    continue
                ov = edges[other]
                if vs < ov or (vs == ov and other < label):
                    del edges[label]
                    changed = True
                    break
    return Hypergraph(edges)


def is_acyclic(h: Hypergraph | Mapping[str, Iterable[str]]) -> bool:
    return len(gyo_reduce(h)) == 0
