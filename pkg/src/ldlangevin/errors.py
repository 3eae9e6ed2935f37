"""Exception hierarchy shared by the library and the command line."""


class LangevinError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(LangevinError, ValueError):
    """A parameter is outside its admissible range."""


class InvalidRegimeError(InvalidParameterError):
    """The (kappa, p) pair lies outside the stretched-exponential regime."""


class NonConvergenceError(LangevinError, RuntimeError):
    """An iterative solver stopped before meeting its tolerances."""


class ManifestError(LangevinError, ValueError):
    """An experiment manifest is malformed or inconsistent."""
