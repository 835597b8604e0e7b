"""Exception types shared across the library."""


class FracregError(Exception):
    """Base class for all library errors."""


class InvalidInputError(FracregError):
    """Arguments violate a documented precondition."""


class TuningError(FracregError):
    """The bandwidth window is empty or tuning is otherwise impossible."""


class SolverError(FracregError):
    """Eigensolver failure; carries the worst residual observed."""

    def __init__(self, message, worst_residual=None):
        super().__init__(message)
        self.worst_residual = worst_residual


class ConfigError(InvalidInputError):
    """Config parse or validation failure; names the offending key and line."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
