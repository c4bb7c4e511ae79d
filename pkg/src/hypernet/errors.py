"""Exception hierarchy shared across the package."""


class HypernetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(HypernetError):
    """Operands have incompatible or unexpected shapes."""


class ValidationError(HypernetError):
    """Input data violates a structural invariant."""


class ParameterError(HypernetError):
    """A hyperparameter or argument is outside its legal range."""


class NumericError(HypernetError):
    """A computation produced non-finite values."""


class TapeError(HypernetError):
    """Illegal use of a gradient tape (reuse, cross-tape mixing, missing tape)."""
