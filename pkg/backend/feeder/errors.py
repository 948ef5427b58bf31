"""Exceptions raised while reading, building and walking feeders."""

from typing import List, Optional


class FeederError(Exception):
    """Base class for feeder model and parser errors."""


class FeederParseError(FeederError):
    """A parse failure pinned to a position in the source text."""

    def __init__(self, message: str, line: int, column: int, token: str = ""):
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        super().__init__(self.describe())

    def describe(self, filename: Optional[str] = None) -> str:
        """Render as `file:line:col message` (file omitted when unknown)."""
        location = f"{self.line}:{self.column}"
        if filename:
            location = f"{filename}:{location}"
        if self.token:
            return f"{location} {self.message} (near '{self.token}')"
        return f"{location} {self.message}"


class FeederSyntaxError(FeederParseError):
    pass


class DuplicateId(FeederParseError):
    pass


class UnknownKind(FeederParseError):
    pass


class UnknownKey(FeederParseError):
    pass


class MatrixShapeMismatch(FeederParseError):
    pass


class UnresolvedReference(FeederError):
    """A declaration points at a bus or segment that does not exist."""

    def __init__(self, name: str, referenced_by: str = ""):
        self.name = name
        self.referenced_by = referenced_by
        detail = f" (referenced by {referenced_by})" if referenced_by else ""
        super().__init__(f"unresolved reference '{name}'{detail}")


class ValidationFailed(FeederError):
    """Carries the full violation report of a network that did not validate."""

    def __init__(self, report: List):
        self.report = report
        super().__init__(f"network failed validation with {len(report)} violation(s)")


class NotRadial(FeederError):
    pass
