"""Exception hierarchy shared across the package."""


class FreqDetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(FreqDetError, ValueError):
    """Tensor extents do not satisfy an operation's requirements."""


class ConfigError(FreqDetError, ValueError):
    """A configuration value is invalid or inconsistent."""


class ContractError(FreqDetError, RuntimeError):
    """An API precondition was violated (e.g. non-scalar loss)."""


class NonFiniteError(FreqDetError, FloatingPointError):
    """An operation produced NaN or Inf."""


class DataError(FreqDetError, ValueError):
    """Dataset, annotation or prediction records are inconsistent."""


class FileFormatError(FreqDetError, OSError):
    """A tensor, checkpoint or annotation file is malformed or truncated."""
