"""Exception hierarchy shared by all factmem modules.

The CLI maps these onto exit codes: UsageError -> 1, DataFormatError and
ShapeError -> 2, NumericError -> 3.
"""


class FactmemError(Exception):
    """Base class for everything raised deliberately by this package."""


class UsageError(FactmemError):
    """Caller broke a documented precondition (bad argument, wrong mode)."""


class ShapeError(FactmemError):
    """Tensor or vector dimensions do not line up; message names both shapes."""


class NumericError(FactmemError):
    """A computation produced NaN/Inf or an otherwise unusable value."""


class DataFormatError(FactmemError):
    """An input file or record does not match its documented format."""


class EmptyStoreError(FactmemError):
    """Retrieval was attempted against a store with no rows."""


class EmptyMemoryError(FactmemError):
    """A memory read was attempted with an empty memory matrix."""
