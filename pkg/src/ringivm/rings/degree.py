"""The degree-m matrix ring used to maintain cofactor matrices.

A payload is a triple ``(c, s, Q)``: a tuple count, a vector of per-variable
sums and a symmetric matrix of pairwise product sums. Storage is sparse: ``s``
keeps only non-zero entries and ``Q`` only its non-zero upper triangle, so the
payloads near the leaves stay tiny and symmetry holds by construction.
Indices are 0-based positions in the ring's variable list.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

import numpy as np

from ringivm.core.lifting import LiftingFunction, constant_lifting
from ringivm.core.ring import Ring
from ringivm.core.schema import Value
from ringivm.errors import DegreeMismatch, NonNumericValue, ParseError

DEGREE_ZERO_TOL = 1e-12


class DegreeMPayload:
    __slots__ = ("m", "c", "s", "q")

    def __init__(self, m: int, c=0, s: Mapping[int, float] | None = None,
                 q: Mapping[tuple[int, int], float] | None = None):
        self.m = m
        self.c = c
        self.s = dict(s) if s else {}
        self.q = dict(q) if q else {}

    @classmethod
    def from_dense(cls, c, s: Sequence[float], Q) -> "DegreeMPayload":
        """Build from a dense vector and a (symmetric) matrix; reads the upper triangle."""
        m = len(s)
        Q = np.asarray(Q)
        if Q.shape != (m, m):
            raise DegreeMismatch(f"matrix of shape {Q.shape} for degree {m}")
        sd = {i: _py(s[i]) for i in range(m) if s[i] != 0}
        qd = {(i, j): _py(Q[i, j]) for i in range(m) for j in range(i, m) if Q[i, j] != 0}
        return cls(m, _py(c), sd, qd)

    def Q(self, i: int, j: int):
        return self.q.get((i, j) if i <= j else (j, i), 0)

    def to_dense(self) -> tuple[float, np.ndarray, np.ndarray]:
        s = np.zeros(self.m)
        for i, v in self.s.items():
            s[i] = v
        Q = np.zeros((self.m, self.m))
        for (i, j), v in self.q.items():
            Q[i, j] = v
            Q[j, i] = v
        return self.c, s, Q

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DegreeMPayload):
            return NotImplemented
        return self.m == other.m and self.c == other.c and self.s == other.s and self.q == other.q

    def __hash__(self) -> int:
        return hash((self.m, self.c, frozenset(self.s.items()), frozenset(self.q.items())))

    def __repr__(self) -> str:
        return f"DegreeMPayload(m={self.m}, c={self.c}, s={self.s}, q={self.q})"


def _py(v):
    # numpy scalars -> python numbers so exact int arithmetic survives
    if isinstance(v, np.generic):
        return v.item()
    return v


def _numeric(x: Value, variable: str):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise NonNumericValue(f"cannot lift non-numeric value {x!r} of {variable!r}")
    if isinstance(x, float) and not math.isfinite(x):
        raise NonNumericValue(f"cannot lift non-finite value {x!r} of {variable!r}")
    return x


class DegreeMRing(Ring):
    """``(c, s, Q)`` triples with

    ``a + b = (ca + cb, sa + sb, Qa + Qb)`` and
    ``a * b = (ca cb, cb sa + ca sb, cb Qa + ca Qb + sa sbᵀ + sb saᵀ)``.
    """

    name = "degree"
    commutative = True

    def __init__(self, m: int | None = None, variables: Sequence[str] | None = None,
                 tol: float = DEGREE_ZERO_TOL):
        if variables is not None:
            variables = list(variables)
            if m is None:
                m = len(variables)
            elif m != len(variables):
                raise DegreeMismatch(f"degree {m} given with {len(variables)} variables")
        if m is None or m < 0:
            raise DegreeMismatch("degree must be a non-negative integer")
        self.m = m
        self.variables = variables or [f"x{i}" for i in range(m)]
        self.index = {v: i for i, v in enumerate(self.variables)}
        self.tol = tol
        self.zero = DegreeMPayload(m, 0)
        self.one = DegreeMPayload(m, 1)

    def _check(self, a: DegreeMPayload, b: DegreeMPayload) -> None:
        if a.m != self.m or b.m != self.m:
            raise DegreeMismatch(f"payload degrees {a.m} and {b.m}, ring degree {self.m}")

    def _norm(self, c, s, q) -> DegreeMPayload:
        tol = self.tol
        s = {k: v for k, v in s.items() if abs(v) >= tol}
        q = {k: v for k, v in q.items() if abs(v) >= tol}
        if isinstance(c, float) and abs(c) < tol:
            c = 0
        p = DegreeMPayload.__new__(DegreeMPayload)
        p.m, p.c, p.s, p.q = self.m, c, s, q
        return p

    def add(self, a, b):
        self._check(a, b)
        s = dict(a.s)
        for k, v in b.s.items():
            s[k] = s.get(k, 0) + v
        q = dict(a.q)
        for k, v in b.q.items():
            q[k] = q.get(k, 0) + v
        return self._norm(a.c + b.c, s, q)

    def neg(self, a):
        return self._norm(-a.c, {k: -v for k, v in a.s.items()}, {k: -v for k, v in a.q.items()})

    def mul(self, a, b):
        self._check(a, b)
        ca, cb = a.c, b.c
        # scaled copies: cb*sa + ca*sb and cb*Qa + ca*Qb
        s = {k: cb * v for k, v in a.s.items()} if cb != 1 else dict(a.s)
        for k, v in b.s.items():
            s[k] = s.get(k, 0) + ca * v
        q = {k: cb * v for k, v in a.q.items()} if cb != 1 else dict(a.q)
        for k, v in b.q.items():
            q[k] = q.get(k, 0) + ca * v
        # sa sbᵀ + sb saᵀ; each (i, j) pair lands once in the upper triangle
        for i, x in a.s.items():
            for j, y in b.s.items():
                v = x * y
                if i == j:
                    q[(i, i)] = q.get((i, i), 0) + 2 * v
                else:
                    k = (i, j) if i < j else (j, i)
                    q[k] = q.get(k, 0) + v
        return self._norm(ca * cb, s, q)

    def is_zero(self, a):
        return abs(a.c) < self.tol and not a.s and not a.q

    def close(self, a, b, tol=0.0):
        if tol == 0:
            return a == b
        if abs(a.c - b.c) > tol:
            return False
        for k in a.s.keys() | b.s.keys():
            if abs(a.s.get(k, 0) - b.s.get(k, 0)) > tol:
                return False
        for k in a.q.keys() | b.q.keys():
            if abs(a.q.get(k, 0) - b.q.get(k, 0)) > tol:
                return False
        return True

    def payload_size(self, a):
        return 1 + len(a.s) + len(a.q)

    def from_int(self, k):
        return DegreeMPayload(self.m, k)

    # -- lifting --------------------------------------------------------
    def lift(self, j: int, x: Value) -> DegreeMPayload:
        """``(1, s_j = x, Q_jj = x²)``, zeros elsewhere."""
        if not 0 <= j < self.m:
            raise DegreeMismatch(f"index {j} outside degree {self.m}")
        x = _numeric(x, self.variables[j])
        if x == 0:
            return self.one
        return DegreeMPayload(self.m, 1, {j: x}, {(j, j): x * x})

    def lifting(self, variable: str) -> LiftingFunction:
        j = self.index[variable]
        return LiftingFunction(variable, lambda x, _j=j: self.lift(_j, x), f"lift[{j}]")

    def catalog(self, bound: Sequence[str]) -> dict[str, LiftingFunction]:
        """Lift every bound variable that has an index; other bound variables lift to one."""
        return {
            x: self.lifting(x) if x in self.index else constant_lifting(x, self.one)
            for x in bound
        }

    # -- text form: c;s1,...,sm;q11,...,qmm (full row-major matrix) -------
    def format(self, a):
        s = ",".join(_fmt(a.s.get(i, 0)) for i in range(self.m))
        q = ",".join(_fmt(a.Q(i, j)) for i in range(self.m) for j in range(self.m))
        return f"{_fmt(a.c)};{s};{q}"

    def parse(self, text):
        parts = text.strip().split(";")
        if len(parts) != 3:
            raise ParseError(f"degree payload needs 3 ';'-separated parts: {text!r}")
        try:
            c = _num(parts[0])
            s = [_num(v) for v in parts[1].split(",")] if parts[1] else []
            q = [_num(v) for v in parts[2].split(",")] if parts[2] else []
        except ValueError as exc:
            raise ParseError(f"bad number in degree payload {text!r}") from exc
        if len(s) != self.m or len(q) != self.m * self.m:
            raise DegreeMismatch(f"payload {text!r} does not have degree {self.m}")
        sd = {i: v for i, v in enumerate(s)}
        qd = {(i, j): q[i * self.m + j] for i in range(self.m) for j in range(i, self.m)}
        return self._norm(c, sd, qd)

    def __repr__(self) -> str:
        return f"DegreeMRing(m={self.m})"


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _num(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)
