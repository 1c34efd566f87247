"""Shared exception types."""

from __future__ import annotations


class DimensionMismatchError(ValueError):
    """A shape contract was violated; carries expected vs. actual sizes."""

    def __init__(self, context: str, expected, actual):
        self.context = context
        self.expected = expected
        self.actual = actual
        super().__init__(f"{context}: expected {expected}, got {actual}")


class DisconnectedTopologyError(ValueError):
    """The radio graph does not connect every device to the aggregator."""

    def __init__(self, unreachable):
        self.unreachable = tuple(sorted(unreachable))
        super().__init__(
            f"devices unreachable from the aggregator: {list(self.unreachable)}"
        )


class InfeasibleError(ValueError):
    """No selection can satisfy the instance's requirements."""


class IdxFormatError(ValueError):
    """An IDX file is malformed (bad magic, truncated, or inconsistent)."""
