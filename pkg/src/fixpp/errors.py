"""Exception types raised across the package."""


class FixppError(Exception):
    """Base class for errors raised by fixpp."""


class OutOfDomainError(FixppError, ValueError):
    """A point lies outside the observation window."""


class DegenerateCovariateError(FixppError, ValueError):
    """A covariate cannot be rescaled or used (e.g. it is constant)."""


class NumericError(FixppError, FloatingPointError):
    """A non-finite value appeared where a finite one is required.

    ``index`` holds the offending node or point index when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ValidationError(FixppError, ValueError):
    """Invalid model specification, configuration or input file."""


class ConvergenceError(FixppError, RuntimeError):
    """An optimizer failed to reach its tolerance.

    ``trace`` holds the objective values visited so far.
    """

    def __init__(self, message, trace=None, grad_norm=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.grad_norm = grad_norm


class ConditioningError(FixppError, ArithmeticError):
    """A covariance matrix could not be factorized even after jitter."""


class DataFormatError(FixppError, ValueError):
    """An input file is missing, unreadable or malformed.

    ``path`` and ``line`` locate the problem when known.
    """

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line
