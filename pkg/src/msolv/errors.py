"""Exception hierarchy shared across the toolchain."""

from __future__ import annotations


class MsolvError(Exception):
    """Base class for all tool errors."""


class MicroSolSyntaxError(MsolvError):
    """Raised by the lexer/parser on malformed source.

    Carries the position and the set of token kinds that would have been
    accepted, so callers can render a precise diagnostic.
    """

    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.expected = expected


class ValidationError(MsolvError):
    """Semantic rejection of a parsed contract.

    ``rule`` is a stable identifier (e.g. ``no-numeric-cast``) that tests
    assert on; ``line``/``col`` point at the offending node.
    """

    def __init__(self, rule: str, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: [{rule}] {message}")
        self.rule = rule
        self.line = line
        self.col = col


class UnknownFunction(MsolvError):
    """A function name was looked up that the bundle does not define."""


class TooFewUsers(MsolvError):
    """An address set too small to host the zero account and the contract."""


class SpecSyntaxError(MsolvError):
    """Malformed property/invariant spec text."""


class SpecBindingError(MsolvError):
    """A spec referenced an unknown or out-of-range role/data/map/slot."""


class BudgetExceeded(MsolvError):
    """An exhaustive enumeration hit its configured bound."""


class PreconditionUnmet(MsolvError):
    """A checker entry point was called without its required prior result."""


class ResourceExhausted(MsolvError):
    """Runaway execution (loop fuel) aborted; a tool error, not a verdict."""
