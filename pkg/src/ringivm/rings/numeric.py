"""Scalar rings: integer counts and numeric sums."""

from __future__ import annotations

import math

from ringivm.core.lifting import LiftingFunction, constant_lifting
from ringivm.core.ring import Ring
from ringivm.core.schema import Value
from ringivm.errors import NonNumericValue

FLOAT_ZERO_TOL = 1e-12


class IntegerRing(Ring):
    """The ring Z of integers; payloads are multiplicities."""

    name = "count"
    commutative = True
    zero = 0
    one = 1

    def add(self, a, b):
        return a + b

    def mul(self, a, b):
        return a * b

    def neg(self, a):
        return -a

    def is_zero(self, a):
        return a == 0

    def close(self, a, b, tol=0.0):
        return a == b if tol == 0 else abs(a - b) <= tol

    def parse(self, text):
        return int(text)

    def from_int(self, k):
        return k


class RealRing(Ring):
    """Numeric sums over floats (ints pass through unchanged until mixed).

    Payloads with magnitude below ``tol`` count as zero and are dropped.
    """

    name = "sum"
    commutative = True
    zero = 0
    one = 1

    def __init__(self, tol: float = FLOAT_ZERO_TOL):
        self.tol = tol

    def add(self, a, b):
        return a + b

    def mul(self, a, b):
        return a * b

    def neg(self, a):
        return -a

    def is_zero(self, a):
        return abs(a) < self.tol

    def close(self, a, b, tol=0.0):
        return abs(a - b) <= max(tol, self.tol)

    def format(self, a):
        return repr(a) if isinstance(a, float) else str(a)

    def from_int(self, k):
        return k

    def parse(self, text):
        try:
            return int(text)
        except ValueError:
            return float(text)

    def __repr__(self) -> str:
        return f"RealRing(tol={self.tol})"


def _numeric(variable: str, x: Value):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise NonNumericValue(f"variable {variable!r} has non-numeric value {x!r}")
    if isinstance(x, float) and not math.isfinite(x):
        raise NonNumericValue(f"variable {variable!r} has non-finite value {x!r}")
    return x


def value_lifting(variable: str) -> LiftingFunction:
    """``g(x) = x``: the variable contributes its value to the SUM."""
    return LiftingFunction(variable, lambda x, _v=variable: _numeric(_v, x), "value")


def square_lifting(variable: str) -> LiftingFunction:
    return LiftingFunction(variable, lambda x, _v=variable: _numeric(_v, x) ** 2, "square")


def one_lifting(variable: str, ring: Ring) -> LiftingFunction:
    return constant_lifting(variable, ring.one, "one")


def count_catalog(bound: list[str], ring: Ring) -> dict[str, LiftingFunction]:
    """COUNT(*): every bound variable lifts to one."""
    return {x: one_lifting(x, ring) for x in bound}


def sum_catalog(bound: list[str], expr_vars: list[str], ring: Ring) -> dict[str, LiftingFunction]:
    """SUM over the product of ``expr_vars``; other bound variables lift to one."""
    cat = {}
    for x in bound:
        cat[x] = value_lifting(x) if x in expr_vars else one_lifting(x, ring)
    return cat
