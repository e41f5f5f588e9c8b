"""Exception types shared across the package."""


class KernelBayesError(Exception):
    """Base class for all errors raised by this package."""


class InputError(KernelBayesError, ValueError):
    """Malformed or out-of-domain arguments."""


class NumericError(KernelBayesError, ArithmeticError):
    """A factorization or solve failed, or produced non-finite values.

    Attributes
    ----------
    condition : float or None
        Condition-number estimate of the offending system, when available.
    delta : float or None
        Regularization constant in effect, when relevant.
    """

    def __init__(self, message, *, condition=None, delta=None):
        super().__init__(message)
        self.condition = condition
        self.delta = delta


class DegenerateWeightsError(NumericError):
    """Weights cancel or vanish so a weighted quantity is undefined."""


class ConfigError(InputError):
    """Invalid experiment configuration."""
