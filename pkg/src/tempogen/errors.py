"""Shared exception base for the package.

Every module-specific error derives from :class:`TempogenError` so callers
(and the CLI) can distinguish domain failures from programming bugs.
"""


class TempogenError(Exception):
    """Base class for all errors raised by tempogen."""


class PositionedError(TempogenError):
    """Error tied to a character offset or line number in a textual input."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
