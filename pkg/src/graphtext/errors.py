"""Exception hierarchy shared across the package.

ValidationError covers bad inputs and contract violations (CLI exit code 1);
plain OSError/IOError from the filesystem maps to exit code 2.
"""


class GraphTextError(Exception):
    """Base class for all package errors."""


class ValidationError(GraphTextError):
    """Input data or arguments violate a documented contract."""


class StructureParseError(ValidationError):
    """Text does not conform to the structure-description grammar."""

    def __init__(self, message: str, text: str = "", pos: int = -1):
        if pos >= 0:
            excerpt = text[max(0, pos - 20) : pos + 20]
            message = f"{message} at position {pos}: ...{excerpt!r}..."
        super().__init__(message)
        self.pos = pos
