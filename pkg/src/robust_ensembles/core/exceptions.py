"""Custom exceptions for Robust Ensembles."""


class RobustEnsemblesError(Exception):
    """Base exception for all Robust Ensembles errors."""


class InvalidParameterError(RobustEnsemblesError, ValueError):
    """A model, ensemble or numerical parameter is outside its allowed range."""


class InvalidStateError(RobustEnsemblesError, ValueError):
    """Gaussian moments violate positivity or the Heisenberg bound."""


class HorizonExceededError(RobustEnsemblesError):
    """A decay curve never fell to its threshold before the time horizon."""


class OptimizationError(RobustEnsemblesError):
    """No admissible evaluation was found in the search region."""


class TransitionNotFoundError(RobustEnsemblesError):
    """The boundary/interior indicator does not change sign on the interval."""


class RegimeError(RobustEnsemblesError):
    """An asymptotic formula was requested outside the regime it describes."""


class NoPositiveRootError(RobustEnsemblesError):
    """A polynomial equation for a time scale has no positive real root."""


class ConfigError(RobustEnsemblesError):
    """Command-line or config-file options are missing or inconsistent."""


class FigureError(RobustEnsemblesError):
    """A figure was requested for empty data."""
