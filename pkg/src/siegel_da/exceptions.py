"""Exception types raised by the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class GridMismatchError(ValueError):
    """Two coefficient functions live on different grids."""


class GridShiftError(ValueError):
    """A shift parameter is not an exact multiple of the grid spacing."""


class PreconditionError(ValueError):
    """A documented precondition of an operation does not hold."""


class SingularityError(ArithmeticError):
    """A kernel denominator vanished to within the guard tolerance."""


class UnsupportedConfigurationError(NotImplementedError):
    """The requested parameter combination is not implemented."""


class ConvergenceError(RuntimeError):
    """An iterative method failed to converge.

    Attributes
    ----------
    last_value : float
        Estimate at the final iteration.
    last_iterate : object
        Final iterate (for power iteration, the last normalized vector).
    n_iter : int
        Number of iterations performed.
    """

    def __init__(self, message, last_value=None, last_iterate=None, n_iter=0):
        super().__init__(message)
        self.last_value = last_value
        self.last_iterate = last_iterate
        self.n_iter = n_iter


class ConfigError(ValueError):
    """Invalid experiment configuration.

    Attributes
    ----------
    field : str
        Dotted path of the offending field, e.g. ``"grid.spacing"``.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
