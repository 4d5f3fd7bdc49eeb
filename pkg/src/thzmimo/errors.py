"""Exception types shared across the package."""


class ThzError(Exception):
    """Base class for errors raised by thzmimo."""


class DomainError(ThzError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class CatalogError(ThzError, ValueError):
    """A spectral-line or material table could not be parsed or validated."""


class TotalReflectionError(DomainError):
    """No real refraction angle exists; the caller should treat the path as blocked."""


class ConfigError(ThzError, ValueError):
    """An experiment or system configuration is inconsistent."""


class NumericalError(ThzError, ArithmeticError):
    """A linear-algebra step lost positive definiteness or became singular.

    Parameters
    ----------
    message : str
        Human readable description.
    iteration : int, optional
        EM/greedy iteration at which the failure happened.
    """

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
