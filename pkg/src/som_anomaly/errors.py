"""Exception types shared across the package."""


class SomAnomalyError(Exception):
    """Base class for errors raised by this package."""


class TensorFormatError(SomAnomalyError):
    """A tensor or model file is malformed (magic, version, CRC, shape, dtype)."""


class DataError(SomAnomalyError):
    """Input data violates a pipeline contract (missing files, mismatched extents)."""


class ConfigError(SomAnomalyError):
    """A configuration value or file is invalid (usage error, not a data error)."""
