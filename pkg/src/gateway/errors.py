"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(ArithmeticError):
    """A series or quadrature failed to reach its tolerance."""


class TruncationError(ArithmeticError):
    """A finite state-space truncation lost more mass than allowed."""


class ConfigError(ValueError):
    """Malformed configuration file; carries the location when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
