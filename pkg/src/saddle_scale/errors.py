"""Typed errors shared across the library."""


class SaddleScaleError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(SaddleScaleError, ValueError):
    """Constructor or configuration arguments are out of range."""


class DimensionMismatchError(SaddleScaleError, ValueError):
    """Vector or matrix shapes do not match the owning problem."""


class NonFiniteError(SaddleScaleError, ValueError):
    """An iterate or oracle value contains NaN or Inf."""


class PreconditionError(SaddleScaleError, RuntimeError):
    """An operation was invoked outside its stated preconditions."""


class CapabilityError(SaddleScaleError, RuntimeError):
    """The problem kind does not support the requested operation."""


class NoUniqueSolutionError(SaddleScaleError, RuntimeError):
    """The stationarity system is singular; no unique solution exists."""


class DivergenceError(SaddleScaleError, RuntimeError):
    """Iterates left the trust region ``||z|| <= 1e12``.

    Carries the partial trajectory recorded up to the abort point in
    ``trajectory`` and the failing iteration index in ``t``.
    """

    def __init__(self, message, trajectory=None, t=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.t = t


class ConfigError(SaddleScaleError, ValueError):
    """A benchmark config document is malformed.

    ``field`` names the offending entry (dotted path into the JSON document)
    so the CLI can print actionable diagnostics.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
