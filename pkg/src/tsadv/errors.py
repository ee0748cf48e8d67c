"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes of two operands are incompatible."""


class GraphError(ValueError):
    """A compute-graph contract was violated (e.g. backward from a non-scalar)."""


class DataError(ValueError):
    """A dataset file or in-memory dataset is malformed."""


class ConfigError(ValueError):
    """A configuration value is out of its allowed range."""


class PersistenceError(RuntimeError):
    """A weights file is corrupt, truncated, or of an unknown version."""


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite."""


class MetricError(ValueError):
    """A metric was requested on an empty or degenerate result set."""
