"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inputs are individually valid but inconsistent, or a parameter is out of range."""


class DomainError(ValueError):
    """A value lies outside the domain an operation is defined on."""


class TrainingDiverged(RuntimeError):
    """Raised when a training loss becomes non-finite.

    The partial trace is attached so callers can persist it for diagnosis.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
