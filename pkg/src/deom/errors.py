"""Exception hierarchy for the solver."""


class DEOMError(Exception):
    """Base class for all solver errors."""


class SizeError(DEOMError, ValueError):
    pass


class ShapeError(DEOMError, ValueError):
    pass


class QuadratureError(DEOMError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FitError(DEOMError):
    """Raised when an exponential decomposition cannot reach its target."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class CapacityError(DEOMError):
    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class ConvergenceError(DEOMError):
    """An iterative solve ran out of iterations.

    ``history`` holds the residual (or relative change) of every sweep.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)

    @property
    def residual(self):
        return self.history[-1] if self.history else float("nan")


class InstabilityError(DEOMError):
    pass


class SingularityError(DEOMError):
    pass


class AlignmentError(DEOMError, ValueError):
    pass


class GridError(DEOMError, ValueError):
    pass


class ConfigError(DEOMError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
