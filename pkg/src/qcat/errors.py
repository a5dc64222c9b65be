"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class QcatError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QcatError):
    """Invalid configuration or command usage."""


class DataError(QcatError):
    """Malformed or inconsistent input data."""


class NumericError(QcatError):
    """Numerical failure during training or evaluation."""


class ContainerVersionError(DataError):
    """Serialized container has an unsupported version tag."""


class ContainerShapeError(DataError):
    """Serialized array payload disagrees with its declared shape."""


class ContainerTruncatedError(DataError):
    """Serialized container ends before its declared payload."""
