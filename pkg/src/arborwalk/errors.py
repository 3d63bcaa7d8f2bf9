"""Exception types raised across the package."""


class ArborwalkError(Exception):
    """Base class for package errors."""


class TreeParseError(ArborwalkError, ValueError):
    """Malformed tree file; ``line`` is the 1-based offending line (or None)."""

    def __init__(self, kind, message, line=None):
        self.kind = kind
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{kind}: {where}{message}")


class TreeBudgetError(ArborwalkError, ValueError):
    """A generator would exceed the configured vertex budget."""


class BudgetExceeded(ArborwalkError, RuntimeError):
    """A walk ran past its step budget without resolving."""


class Inconclusive(ArborwalkError, RuntimeError):
    """The finite-depth decay classification could not decide."""


class ConstraintViolation(ArborwalkError, ValueError):
    """A parameter violates the constraints of the requested regime."""


class NonAdjacent(ArborwalkError, ValueError):
    """Clock requested for a pair of vertices that are not neighbours."""


class InsufficientSamples(ArborwalkError, RuntimeError):
    """Too few conditioning events to form an estimate."""


class ZeroFlow(ArborwalkError, RuntimeError):
    """The capacity max-flow is zero, so no unit flow exists."""
