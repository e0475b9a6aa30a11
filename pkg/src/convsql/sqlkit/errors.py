"""Errors and warnings raised while parsing and resolving SQL."""

from __future__ import annotations


class SqlError(ValueError):
    """Base class for sqlkit failures."""


class ParseError(SqlError):
    """Malformed SQL; carries the character position where parsing failed."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class SchemaResolutionError(SqlError):
    """A referenced table or column is absent from the supplied schema."""


class AmbiguousColumnWarning(UserWarning):
    """An unqualified column matched several tables; first FROM table wins."""
