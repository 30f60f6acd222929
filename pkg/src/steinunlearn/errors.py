"""Exception types shared across the package."""


class SteinUnlearnError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigurationError(SteinUnlearnError, ValueError):
    """Invalid hyperparameter, network spec, or experiment config."""


class ArgumentError(SteinUnlearnError, ValueError):
    """A call-site argument is out of its documented range."""


class ShapeError(SteinUnlearnError, ValueError):
    """Input dimensions do not match what the model or kernel expects."""


class LabelError(SteinUnlearnError, ValueError):
    """Class label outside the valid range."""


class DataError(SteinUnlearnError, ValueError):
    """Malformed, degenerate, or non-finite data."""


class NumericalError(SteinUnlearnError, ArithmeticError):
    """A computation diverged to non-finite values."""


class ComparisonError(SteinUnlearnError, ValueError):
    """Models with different architectures cannot be compared."""
