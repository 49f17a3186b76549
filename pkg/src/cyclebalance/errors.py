"""Exception taxonomy shared across the package."""


class ConfigurationError(Exception):
    """A config value or file is invalid (bad path, incompatible sizes, ...)."""


class CapacityError(Exception):
    """A request exceeds what the data can provide (too few images, empty class)."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape mismatch, bad range)."""


class NumericalError(ArithmeticError):
    """A computed quantity is not finite; the message names the offending term."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss.

    ``last_checkpoint`` points at the most recent good checkpoint on disk,
    if one was written before the abort.
    """

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class ProxyQualityError(Exception):
    """The proxy scoring classifier is below the accuracy floor on real data."""
