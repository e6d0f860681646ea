"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class EsstError(Exception):
    """Base class for all package errors."""


class ConfigError(EsstError):
    """Invalid configuration, option combination, or model spec."""


class DataError(EsstError):
    """Malformed or missing input data (files, headers, shapes on disk)."""


class ShapeError(EsstError):
    """Tensor shape or axis-role mismatch inside a computation."""


class NumericalError(EsstError):
    """Non-finite values, divergence, or failed numerical procedure."""
