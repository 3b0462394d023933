"""Exception taxonomy shared across the package.

ConfigError maps to CLI exit code 2, DataError to exit code 3. Everything
else is a plain bug and surfaces as a traceback (exit 1).
"""


class RegraphError(Exception):
    pass


class ShapeError(RegraphError, ValueError):
    """Tensor or matrix dimensions do not line up."""


class NumericError(RegraphError, ValueError):
    """Non-finite values where finite ones are required."""


class ConfigError(RegraphError, ValueError):
    """Invalid configuration, schema violation, or inconsistent options."""


class DataError(RegraphError, ValueError):
    """Malformed or insufficient input data."""
