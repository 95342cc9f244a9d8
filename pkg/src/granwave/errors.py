"""Exception types shared across the package."""


class GranwaveError(Exception):
    """Base class for all package errors."""


class ConfigError(GranwaveError):
    """Invalid manifest, config file, or CLI argument combination."""


class SimulationError(GranwaveError):
    """Simulation produced an unusable state (NaN, coincident particles).

    Carries the step index at which the failure was detected, when known.
    """

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class ConvergenceError(GranwaveError):
    """An iterative solver ran out of iterations.

    Carries the residual force norm so callers can decide whether the
    result is close enough to keep.
    """

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class PackingError(ConvergenceError):
    """Compression protocol could not reach the target packing fraction."""


class GradientError(GranwaveError):
    """Backward pass produced a non-finite cotangent."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class DegenerateInputError(GranwaveError, ValueError):
    """A loss was evaluated on inputs outside its domain (e.g. zero intensity)."""
