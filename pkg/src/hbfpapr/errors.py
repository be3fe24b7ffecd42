"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Input has the wrong shape or an inconsistent size."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given input (e.g. all-zero signal)."""


class SampleDeficitError(ValueError):
    """Not enough samples to resolve the requested probability level."""


class DomainMismatchError(ValueError):
    """A signal carries the wrong domain tag for the requested operation."""


class OracleDimensionError(ValueError):
    """Problem too large for the brute-force verification oracle."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""
