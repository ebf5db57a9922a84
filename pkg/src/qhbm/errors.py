"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific one that applies.
"""


class ConfigError(Exception):
    """Invalid configuration: unknown keys, out-of-range values, bad flags."""


class DataError(Exception):
    """Malformed or missing input data: containers, sidecars, checkpoints."""


class NumericError(Exception):
    """Numeric validity failure: non-PSD matrix, unnormalised distribution."""
