"""Error classes shared across the package.

Each class carries the process exit code the CLI maps it to:
configuration 2, data 3, numeric 4.
"""


class OpfoldError(Exception):
    exit_code = 1


class ConfigError(OpfoldError):
    """Invalid configuration: bad operator parameters, bank, grid or flags."""

    exit_code = 2


class DataError(OpfoldError):
    """Invalid input data: shape mismatch, non-finite values, ragged CSV."""

    exit_code = 3


class NumericError(OpfoldError):
    """Numerical failure: non-convergence, factorisation breakdown."""

    exit_code = 4
