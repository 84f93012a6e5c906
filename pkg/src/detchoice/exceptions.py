"""Exception types shared across the package.

Argument and dimension problems raise plain ``ValueError``; the classes here
mark conditions that callers are expected to branch on (CLI exit codes,
fit-pipeline error reporting).
"""

from __future__ import annotations


class CapacityError(ValueError):
    """Requested an enumeration over more items than the configured cap."""


class DataError(ValueError):
    """Input data violates the model's or file format's contract."""


class NumericalError(RuntimeError):
    """A numerical routine failed; carries condition diagnostics."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({detail})"


class FitError(RuntimeError):
    """Optimization or MCMC could not produce a usable result."""


class DiagnosticsError(RuntimeError):
    """Convergence diagnostics gate failed and no override was given."""
