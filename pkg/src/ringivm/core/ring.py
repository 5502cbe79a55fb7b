"""The payload algebra interface and operation counting."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any

Payload = Any


class Ring:
    """A payload ring: ``zero``, ``one``, ``add``, ``mul``, ``neg`` and a zero test.

    Generic code never assumes ``mul`` is commutative; it always multiplies in
    view-tree child order. Subclasses set ``commutative = True`` when it is,
    which unlocks the factorized-update rewrite.
    """

    name = "ring"
    commutative = False
    zero: Payload
    one: Payload

    def add(self, a: Payload, b: Payload) -> Payload:
        raise NotImplementedError

    def mul(self, a: Payload, b: Payload) -> Payload:
        raise NotImplementedError

    def neg(self, a: Payload) -> Payload:
        raise NotImplementedError

    def is_zero(self, a: Payload) -> bool:
        raise NotImplementedError

    def sub(self, a: Payload, b: Payload) -> Payload:
        return self.add(a, self.neg(b))

    def close(self, a: Payload, b: Payload, tol: float = 0.0) -> bool:
        """Equality up to ``tol`` per numeric component (exact when ``tol == 0``)."""
        return self.is_zero(self.sub(a, b)) if tol == 0 else a == b

    def from_int(self, k: int) -> Payload:
        """``k * one``, by repeated doubling."""
        out, base, n = self.zero, self.one, abs(k)
        while n:
            if n & 1:
                out = self.add(out, base)
            base = self.add(base, base)
            n >>= 1
        return self.neg(out) if k < 0 else out

    def payload_size(self, a: Payload) -> int:
        """Number of stored entries a payload accounts for (1 for scalars)."""
        return 1

    def format(self, a: Payload) -> str:
        return str(a)

    def parse(self, text: str) -> Payload:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


@dataclass
class OpCounters:
    entries_touched: int = 0
    payload_mults: int = 0
    payload_adds: int = 0

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def snapshot(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class CountingRing(Ring):
    """Wraps a ring and counts every ``add`` and ``mul`` into ``counters``."""

    def __init__(self, inner: Ring, counters: OpCounters):
        self.inner = inner
        self.counters = counters
        self.name = inner.name
        self.commutative = inner.commutative
        self.zero = inner.zero
        self.one = inner.one

    def add(self, a, b):
        self.counters.payload_adds += 1
        return self.inner.add(a, b)

    def mul(self, a, b):
        self.counters.payload_mults += 1
        return self.inner.mul(a, b)

    def neg(self, a):
        return self.inner.neg(a)

    def is_zero(self, a):
        return self.inner.is_zero(a)

    def close(self, a, b, tol=0.0):
        return self.inner.close(a, b, tol)

    def payload_size(self, a):
        return self.inner.payload_size(a)

    def from_int(self, k):
        return self.inner.from_int(k)

    def format(self, a):
        return self.inner.format(a)

    def parse(self, text):
        return self.inner.parse(text)

    def __getattr__(self, item):
        # ring-specific helpers (lift, degree, ...) pass through uncounted
        return getattr(self.inner, item)

    def __repr__(self) -> str:
        return f"CountingRing({self.inner!r})"


def base_ring(ring: Ring) -> Ring:
    while isinstance(ring, CountingRing):
        ring = ring.inner
    return ring
