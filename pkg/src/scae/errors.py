"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage/configuration problems
exit 1, bad input data exits 2, numeric failures exit 3.
"""


class ScaeError(Exception):
    exit_code = 1


class ConfigError(ScaeError):
    """Invalid configuration or misuse of an API contract."""

    exit_code = 1


class DataError(ScaeError):
    """Unreadable or malformed input data (images, bitstreams, checkpoints)."""

    exit_code = 2


class DecodeError(DataError):
    """Bitstream cannot be decoded (corrupt, truncated, or wrong model)."""

    exit_code = 2


class NumericError(ScaeError):
    """Non-finite values or diverging optimization."""

    exit_code = 3


class ClampWarning(UserWarning):
    """More than 1% of quantized symbols fell outside the coded support."""
