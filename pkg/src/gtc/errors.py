"""Exception taxonomy shared across the package."""


class GtcError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(GtcError):
    """Structural mismatch: incompatible shapes, dims, or graph wiring."""


class ConfigError(GtcError):
    """Invalid or inconsistent configuration values."""


class DataError(GtcError):
    """Dataset loading problem; message names the file (and line if known)."""


class NumericError(GtcError):
    """Non-finite values or numerically undefined quantities."""
