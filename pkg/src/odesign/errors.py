"""Exception types shared across the package."""


class OdesignError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteState(OdesignError):
    """Integration produced a non-finite state (blow-up).

    Raised instead of clamping so that callers can decide whether to
    resample the offending parameter draw.
    """


class DidNotConverge(OdesignError):
    """An iterative routine exhausted its budget on pathological input."""


class TooManyFailures(OdesignError):
    """Too many integration blow-ups while redrawing parameters."""


class AllStartsFailed(OdesignError):
    """Every local optimization start returned a non-finite objective."""


class DegenerateVariance(OdesignError):
    """Within-group variance is zero but group means differ."""


class GridMismatch(OdesignError):
    """File times do not match the configured time grid."""


class ConfigError(OdesignError):
    """Invalid run configuration (bad key, bound, or grid)."""
