"""Exception types shared across the package.

Each class maps to one failure mode so callers (and the CLI) can
distinguish bad input from numerical breakdown.
"""


class MemhopfError(Exception):
    """Base class for all package errors."""


class ParameterError(MemhopfError, ValueError):
    """Model parameters violate a construction invariant."""


class ConfigError(MemhopfError, ValueError):
    """Config file could not be parsed or validated.

    Carries the 1-based line number when the error is tied to a line.
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DivisionHazardError(MemhopfError, FloatingPointError):
    """A ratio argument fell at or below the underflow threshold."""


class BranchConditionError(MemhopfError, RuntimeError):
    """The arccos branch assumption (positive sine) failed."""


class SingularSolveError(MemhopfError, RuntimeError):
    """A 2x2 solve was too ill-conditioned to trust (non-resonance violated)."""


class NoHopfPointError(MemhopfError, RuntimeError):
    """No delay-induced instability exists for the given parameters."""


class InconclusiveError(MemhopfError, RuntimeError):
    """Parameters fall outside the region where the verdict logic applies."""


class CflError(MemhopfError, RuntimeError):
    """Explicit time step violates the diffusive stability limit."""


class BlowUpError(MemhopfError, RuntimeError):
    """Simulation fields left the trusted range (divergence detected)."""
