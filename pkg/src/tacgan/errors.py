"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration, data and format problems
exit with 2, numerical failures during training exit with 3.
"""


class TacganError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TacganError):
    """Invalid or inconsistent configuration."""


class DataError(TacganError):
    """Dataset loading or validation failure."""


class FormatError(TacganError):
    """Malformed on-disk artifact (embedding table, checkpoint, grid)."""


class ShapeError(TacganError):
    """Array shape inconsistent with the model configuration."""


class NumericalError(TacganError):
    """Non-finite value encountered during training."""
