"""Exception hierarchy shared by all udfgrid modules."""

from __future__ import annotations


class UdfGridError(Exception):
    """Base class for all udfgrid errors."""


class EmptyCloudError(UdfGridError):
    """An operation requiring a non-empty point cloud received an empty one."""


class InsufficientDataError(UdfGridError):
    """Not enough points to perform the requested estimation."""


class MissingDataError(UdfGridError):
    """A required optional field (normals, sensor origins) is absent."""


class OutOfBoundsError(UdfGridError):
    """A position or index falls outside the grid lattice."""


class WrongKindError(UdfGridError):
    """A grid of the wrong signedness was passed to an extraction routine."""


class ContractError(UdfGridError):
    """An argument violates a documented precondition."""


class ParseError(UdfGridError):
    """A file could not be parsed.

    Carries the byte offset at which parsing failed so corrupt files can
    be inspected directly with a hex viewer.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
