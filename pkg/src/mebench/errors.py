"""Error taxonomy shared by all subpackages.

The CLI maps these onto distinct exit codes: ConfigError -> 2,
DataError -> 3, anything else -> 4.
"""


class MebenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MebenchError):
    """Invalid configuration, parameters, or arguments."""


class DataError(MebenchError):
    """Invalid, inconsistent, or missing input data."""
