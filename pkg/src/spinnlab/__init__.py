"""Solver laboratory for singularly perturbed differential equations."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigurationError,
    NumericError,
    TrainingDiverged,
    UndefinedMetricError,
    UnknownProblemError,
)
