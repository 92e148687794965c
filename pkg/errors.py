"""
Exception hierarchy shared by the efficiency library, the CLI and the HTTP service.
"""

from typing import Optional


class NetputEffError(RuntimeError):
    """Base class for every failure raised by the library."""


class DomainError(NetputEffError, ValueError):
    """An argument lies outside the domain of the operation (e.g. a negative expansion)."""


class DimensionMismatchError(NetputEffError, ValueError):
    pass


class InfeasibleError(NetputEffError):
    """The evaluated netput is not in the technology."""


class UnsupportedRegimeError(NetputEffError):
    """The (technology, p, dimension) combination has no supported algorithm."""


class ConvexityRequiredError(UnsupportedRegimeError):
    """A minimization dual was requested on a non-convex technology."""


class ConfigurationError(NetputEffError):
    pass


class SolverFailure(NetputEffError):
    pass


class DatasetParseError(NetputEffError, ValueError):
    """Malformed dataset or HRep file. `line` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
