"""Exception types shared across the package."""


class IcubenchError(Exception):
    """Base class for all package errors."""


class ConfigError(IcubenchError):
    """Invalid configuration or unusable option combination (exit code 2)."""


class SchemaError(IcubenchError):
    """Input file does not match the expected table layout (exit code 3)."""


class DataError(IcubenchError):
    """Missing or unreadable input data (exit code 3)."""


class UndefinedMetricError(IcubenchError):
    """Metric has no defined value for the given inputs (e.g. single-class labels)."""


class TrainingError(IcubenchError):
    """Numerical failure during model training (non-finite gradients etc.)."""
