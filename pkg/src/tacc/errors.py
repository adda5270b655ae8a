"""Error types shared across the compiler and runtime.

Every user-facing failure derives from TaccError so the CLI can map it to
exit code 1; anything else escaping a subcommand is an internal fault and
maps to exit code 2.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Span:
    """Source location: 1-based line, 1-based column range [col, end_col)."""

    line: int
    col: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class TaccError(Exception):
    """Base class for all user-facing errors."""


class UnknownCharacter(TaccError):
    def __init__(self, char: str, span: Span):
        super().__init__(f"unknown character {char!r} at {span}")
        self.char = char
        self.span = span


class UnterminatedLiteral(TaccError):
    def __init__(self, text: str, span: Span):
        super().__init__(f"malformed numeric literal {text!r} at {span}")
        self.text = text
        self.span = span


class TaSyntaxError(TaccError):
    """Parse failure: what was expected vs. what was found, with a span."""

    def __init__(self, span: Span, expected: str, found: str):
        super().__init__(f"syntax error at {span}: expected {expected}, found {found}")
        self.span = span
        self.expected = expected
        self.found = found


class UndeclaredIdentifier(TaccError):
    def __init__(self, name: str, span: Span | None = None):
        at = f" at {span}" if span else ""
        super().__init__(f"undeclared identifier {name!r}{at}")
        self.name = name
        self.span = span


class RankMismatch(TaccError):
    def __init__(self, tensor: str, expected: int, found: int):
        super().__init__(f"tensor {tensor!r}: expected {expected} labels, found {found}")
        self.tensor = tensor
        self.expected = expected
        self.found = found


class InvalidIndexUsage(TaccError):
    def __init__(self, message: str, index: str | None = None):
        super().__init__(message)
        self.index = index


class TooManyOperands(TaccError):
    def __init__(self, n: int, limit: int = 8):
        super().__init__(f"{n} operands exceeds the exhaustive-search bound of {limit}")
        self.n = n


class RankTooHigh(TaccError):
    def __init__(self, group: str, size: int, limit: int = 6):
        super().__init__(f"{group} group has {size} indices, limit {limit} (factorial bound)")
        self.group = group
        self.size = size


class CacheTooSmall(TaccError):
    def __init__(self, which: str, size: int):
        super().__init__(f"{which} cache of {size} bytes cannot hold one tile")
        self.which = which
        self.size = size


class ShapeMismatch(TaccError):
    def __init__(self, message: str):
        super().__init__(message)


class UninitializedTensor(TaccError):
    def __init__(self, name: str):
        super().__init__(f"tensor {name!r} is read before any value was written to it")
        self.name = name


class NonEmptyRequired(TaccError):
    def __init__(self, what: str):
        super().__init__(f"{what} must not be empty")
        self.what = what


class FlopOverflow(TaccError):
    def __init__(self, value: int):
        super().__init__(f"flop count {value} exceeds the representable range (2^63 - 1)")
        self.value = value


class ConfigError(TaccError):
    def __init__(self, message: str):
        super().__init__(message)
