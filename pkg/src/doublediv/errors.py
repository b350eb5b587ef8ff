"""Exception types raised across the package."""


class DoubleDivError(Exception):
    """Base class for all package errors."""


class GeometryError(DoubleDivError, ValueError):
    """Degenerate or inconsistent domain/mesh parameters."""


class ResourceError(DoubleDivError, MemoryError):
    """A request would exceed the documented memory budget."""


class DomainError(DoubleDivError, ValueError):
    """A field was evaluated outside its domain of definition."""


class EvaluationError(DoubleDivError, ArithmeticError):
    """A field produced a non-finite value."""


class EllipticityError(DoubleDivError, ValueError):
    """A diffusion matrix failed to be positive definite.

    The offending point is stored in ``witness``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class UnsupportedError(DoubleDivError, TypeError):
    """Operation requires a closed-form field but got something else."""


class ResolutionError(DoubleDivError, ValueError):
    """A sampling grid is too coarse to resolve a kernel."""


class SolverError(DoubleDivError, RuntimeError):
    """Linear solve failed; ``condition`` holds a 1-norm condition estimate."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class TraceError(DoubleDivError, ValueError):
    """Trace extraction requested on unsupported input."""


class ConfigError(DoubleDivError, ValueError):
    """Malformed run configuration."""
