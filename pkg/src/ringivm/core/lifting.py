from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

from ringivm.core.ring import Payload
from ringivm.core.schema import Value


@dataclass(frozen=True)
class LiftingFunction:
    """Maps values of one variable into the payload ring when it is marginalized."""

    variable: str
    map: Callable[[Value], Payload] = field(compare=False)
    label: str = "custom"

    def __call__(self, value: Value) -> Payload:
        return self.map(value)


def constant_lifting(variable: str, payload: Payload, label: str = "one") -> LiftingFunction:
    return LiftingFunction(variable, lambda _x, _p=payload: _p, label)
