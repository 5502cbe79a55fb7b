"""Exception hierarchy shared by every layer of the engine."""

from __future__ import annotations


class RingIVMError(Exception):
    """Base class for all engine errors."""


class SchemaMismatch(RingIVMError):
    pass


class UnknownVariable(RingIVMError):
    pass


class DegreeMismatch(RingIVMError):
    pass


class NonNumericValue(RingIVMError):
    pass


class InvalidVariableOrder(RingIVMError):
    pass


class UnknownRelation(RingIVMError):
    pass


class BadFactorization(RingIVMError):
    pass


class MissingRelation(RingIVMError):
    pass


class NotUpdatable(RingIVMError):
    pass


class CounterUnderflow(RingIVMError):
    """An indicator counter would drop below zero, i.e. the update stream is corrupted."""


class ModeMismatch(RingIVMError):
    pass


class ValidationError(RingIVMError):
    pass


class ParseError(RingIVMError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EmptyDataset(RingIVMError):
    pass


class Divergence(RingIVMError):
    pass


class DimensionMismatch(RingIVMError):
    pass


class OracleDivergence(RingIVMError):
    """Maintained state disagrees with from-scratch recomputation."""
