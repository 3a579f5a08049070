"""Exception hierarchy shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class InsufficientDataError(ValidationError):
    """Fewer training points than requested centroids."""


class CapacityError(ValidationError):
    """The DocID space V**L cannot hold every document."""


class CollisionError(RuntimeError):
    """A DocID collision could not be resolved at the final position."""


class DuplicateDocIdError(ValidationError):
    """The same sequential DocID was inserted twice."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the query (e.g. no relevant documents)."""


class ArtifactError(RuntimeError):
    """Persisted artifact is missing, malformed, or from another config."""
