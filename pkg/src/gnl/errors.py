class GNLError(Exception):
    """Base class for package errors."""


class ConfigError(GNLError, ValueError):
    """Invalid configuration or argument value."""


class ShapeError(GNLError, ValueError):
    """Array shapes do not satisfy an operation's contract."""


class FormatError(GNLError, ValueError):
    """Malformed or incompatible file (checkpoint, score map, manifest)."""


class NumericError(GNLError, ArithmeticError):
    """Non-finite value encountered where finite values are required."""


class UndefinedMetricError(GNLError, ValueError):
    """Metric is undefined for the given inputs (e.g. single-class AUROC)."""
