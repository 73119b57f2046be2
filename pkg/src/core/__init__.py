"""Numerical core: shock distributions, scalar root finding, errors and settings."""

from .errors import (
    ConvergenceFailure,
    MaxIterExceeded,
    MultipleRoots,
    NoSignChange,
    NonFinite,
    OligodynError,
    OutputError,
    ParameterError
)
from .settings import DEFAULT_SETTINGS, SolverSettings

__all__ = [
    'OligodynError',
    'ParameterError',
    'NoSignChange',
    'ConvergenceFailure',
    'NonFinite',
    'MultipleRoots',
    'MaxIterExceeded',
    'OutputError',
    'SolverSettings',
    'DEFAULT_SETTINGS'
]
