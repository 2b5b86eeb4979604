"""Exception hierarchy shared by every qforce module."""


class QForceError(Exception):
    """Base class for all library errors."""


class GridMismatchError(QForceError, ValueError):
    """Fields live on incompatible grids, or an operation does not support the grid kind."""


class ParameterError(QForceError, ValueError):
    """A numeric parameter violates its documented range."""


class DegenerateInputError(QForceError, ValueError):
    """Input carries no usable information (e.g. an all-zero density)."""


class ConfigError(QForceError):
    """Scenario configuration failed schema validation."""


class ScenarioFailure(QForceError):
    """A scenario ran but one of its assertions did not hold."""


class NumericError(QForceError, FloatingPointError):
    """NaN or Inf detected in a computed quantity."""
