"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class FunlongError(Exception):
    """Base error for this package."""


class InvalidArgumentError(FunlongError, ValueError):
    """An argument violates its contract."""


class InvalidConfigError(FunlongError, ValueError):
    """A configuration object or file is inconsistent.

    ``fields`` lists the offending keys when known.
    """

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []


class UnsupportedOperationError(FunlongError):
    """The operation is out of contract for this input kind."""


class PositivityError(FunlongError):
    """The intervention asks for mass where the data law has none.

    Carries the first offending partition index and a short description of
    the history so the caller (and the CLI) can report it.
    """

    def __init__(self, message: str, index: int | None = None, history: str | None = None):
        super().__init__(message)
        self.index = index
        self.history = history


class DegenerateDesignError(FunlongError):
    """A regression design matrix is rank deficient or a fit is degenerate."""


class TooLargeError(FunlongError):
    """Exact enumeration would exceed the configured path cap."""


class InternalSimulationError(FunlongError):
    """An internal sampler invariant failed (with diagnostic)."""
