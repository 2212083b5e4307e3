"""Exception hierarchy shared by the library and the command-line frontend."""

from __future__ import annotations


class ForLionError(Exception):
    """Base class for all package errors."""


class ValidationError(ForLionError, ValueError):
    """Invalid user input: factors, formulas, configuration values.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key

    @property
    def message(self) -> str:
        return self.args[0] if self.args else ""

    def __str__(self) -> str:
        msg = super().__str__()
        if self.key and self.key not in msg:
            return f"{self.key}: {msg}"
        return msg


class FormulaError(ValidationError):
    """Malformed predictor formula."""


class NumericalError(ForLionError, ArithmeticError):
    """A computation could not produce a usable numerical result."""


class SingularDesignError(NumericalError):
    """Design information matrix is not positive definite."""


class InfeasibleParameterError(NumericalError):
    """Parameter vector gives no valid probability model at a design point."""


class DegenerateProbabilityError(NumericalError):
    """Category probabilities on the boundary of the simplex."""
