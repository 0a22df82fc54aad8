"""Exception hierarchy.

Configuration and contract errors are caller mistakes. Everything deriving
from :class:`DiagnosticError` means the numerics could not deliver what a
theorem hypothesis promised; those carry a ``diagnostics`` mapping that the
CLI serialises to JSON.
"""

from __future__ import annotations

from typing import Any


class AntilimitError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigurationError(AntilimitError, ValueError):
    """Bad model name, missing parameters, malformed config."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ContractError(AntilimitError, ValueError):
    """A documented precondition was violated by the caller."""


class DiagnosticError(AntilimitError):
    def __init__(self, message: str, **diagnostics: Any):
        super().__init__(message)
        self.diagnostics = diagnostics

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self), "diagnostics": self.diagnostics}


class HypothesisViolation(DiagnosticError):
    """A standing condition on Z or V fails on the sampled grid."""


class ResolutionError(DiagnosticError):
    """Sampling too coarse to resolve the structure; refine and retry."""


class BoundaryEscapeError(DiagnosticError):
    """An orbit would leave I = [-1, 1]."""


class NoConvergenceError(DiagnosticError):
    """Newton iteration stagnated. ``last_iterate`` holds the final values."""

    def __init__(self, message: str, last_iterate=None, **diagnostics: Any):
        super().__init__(message, **diagnostics)
        self.last_iterate = last_iterate


class DegeneratePotentialError(DiagnosticError):
    """No admissible coupling bound eps0 could be found."""


class ExistenceViolation(DiagnosticError):
    """No solution found where the existence theorem guarantees one."""
