"""Exception hierarchy shared by all modules."""


class GcdualError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(GcdualError, ValueError):
    exit_code = 1


class DomainError(GcdualError, ValueError):
    """Parameters outside the domain where the quantity is finite."""

    exit_code = 2


class InfeasibleError(GcdualError):
    """The moment equation has no solution for the requested target."""

    exit_code = 2

    def __init__(self, message, last_params=None, iterations=None):
        super().__init__(message)
        self.last_params = last_params
        self.iterations = iterations


class DivergenceError(GcdualError):
    exit_code = 2


class RegionError(GcdualError):
    exit_code = 2


class EmptyDomainError(GcdualError, ValueError):
    exit_code = 2


class ExtrapolationError(GcdualError):
    """Raised when a boundary limit does not settle; ``value`` is +inf."""

    exit_code = 2

    def __init__(self, message, value=float("inf")):
        super().__init__(message)
        self.value = value


class BudgetError(GcdualError):
    exit_code = 3


class TruncationWarning(UserWarning):
    pass
