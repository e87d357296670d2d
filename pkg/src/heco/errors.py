"""Exception types raised across the package."""


class HecoError(Exception):
    """Base class for every error raised by :mod:`heco`."""


class ShapeError(HecoError, ValueError):
    """Operand shapes do not conform."""


class NumericError(HecoError, FloatingPointError):
    """An operation produced NaN or Inf."""


class ContractError(HecoError, ValueError):
    """A precondition of an operation was violated."""


class SchemaError(HecoError, ValueError):
    """A meta-path or relation chain does not fit the graph schema."""


class LoadError(HecoError, ValueError):
    """A dataset bundle or graph is malformed."""


class ConfigError(HecoError, ValueError):
    """A configuration value is out of range."""


class DataError(HecoError, ValueError):
    """Labels or splits are inconsistent with the data."""
