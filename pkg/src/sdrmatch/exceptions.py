class SdrMatchError(Exception):
    """Base class for errors raised by sdrmatch."""


class DataError(SdrMatchError, ValueError):
    """Input data is malformed or violates a precondition."""


class NumericalError(SdrMatchError, ArithmeticError):
    """A numerical routine produced a non-finite or singular result."""


class SeparationError(DataError):
    """The treatment is perfectly separable by the covariates."""
