"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid shapes, names or option combinations detected before any math runs."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or an unsolvable system."""


class TrainingDiverged(NumericError):
    """Training hit a NaN loss; carries the last finite parameter snapshot."""

    def __init__(self, message, iteration, last_good):
        super().__init__(message)
        self.iteration = iteration
        self.last_good = last_good


class UndefinedMetricError(ValueError):
    """Relative L2 is undefined (all-zero reference values)."""


class UnknownProblemError(KeyError):
    """Problem name not present in the registry."""

    def __init__(self, name, known):
        super().__init__(name)
        self.name = name
        self.known = tuple(known)

    def __str__(self):
        return f"unknown problem {self.name!r}; known problems: {', '.join(self.known)}"
