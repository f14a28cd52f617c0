"""Exception hierarchy for repmode."""


class RepModeError(Exception):
    """Base class for all repmode errors."""


class DimensionError(RepModeError, ValueError):
    """Tensor shapes or channel extents do not line up."""


class GeometryError(RepModeError, ValueError):
    """Kernel extent, stride, padding or divisibility is invalid."""


class StatisticsError(RepModeError, ValueError):
    """A statistic is undefined for the given data (empty or constant)."""


class FormatError(RepModeError, ValueError):
    """An on-disk file (VOL5, RPMK, manifest) is malformed."""


class ConfigError(RepModeError, ValueError):
    """Configuration is invalid or contains unknown keys."""


class CacheError(RepModeError, RuntimeError):
    """Backward was requested without a recorded forward pass."""


class ToleranceError(RepModeError):
    """A numerical agreement check exceeded its tolerance."""


class DivergenceError(RepModeError):
    """Training produced a non-finite loss."""
