"""Exception types shared across the toolkit."""


class ChaoskitError(Exception):
    """Base class for all toolkit errors."""


class DivergedTrajectory(ChaoskitError):
    """An orbit left the admissible region (|observable| > guard or non-finite).

    ``index`` is the step (sequences) or node slot (trees) where divergence
    was first detected.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SingularJacobian(ChaoskitError):
    """The tangent map is unbounded or the tangent vector collapsed to zero."""


class InsufficientLength(ChaoskitError):
    """An input series is too short for the requested computation."""


class DegenerateSeries(ChaoskitError):
    """An input series carries no usable geometric information."""


class ShapeError(ChaoskitError):
    """Array dimensions do not match the operation's contract."""


class NumericalError(ChaoskitError):
    """A non-finite value appeared where finiteness is required.

    ``param`` names the offending parameter when known.
    """

    def __init__(self, message, param=None):
        super().__init__(message)
        self.param = param


class FormatError(ChaoskitError):
    """A file manifest or payload is corrupt or inconsistent."""


class ConfigError(ChaoskitError):
    """A configuration value or combination is invalid.

    ``key`` names the offending option when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class InvalidInput(ChaoskitError):
    """An argument violates an operation's precondition."""
