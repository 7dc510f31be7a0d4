"""Exception types raised across the pipeline."""


class RecurdetError(Exception):
    """Base class for all library errors."""


class UnsupportedImageFormat(RecurdetError):
    """Input file is not an 8-bit PGM (P5) or 8-bit PNG."""


class ImageTooSmall(RecurdetError):
    """Image is smaller than the patch in at least one dimension."""


class ZeroVariancePatch(RecurdetError):
    """Patch has no intensity variation, correlation is undefined."""


class ConstantMap(RecurdetError):
    """Auto-correlation of a constant map is undefined."""


class DimensionMismatch(RecurdetError):
    """Two maps that must share dimensions do not."""


class DegenerateBox(RecurdetError):
    """Bounding box is outside the image or too small to define a scale."""


class NoRecurrence(RecurdetError):
    """No patch with at least two occurrences could be found."""


class ZeroMass(RecurdetError):
    """Map has no positive mass, moments are undefined."""


class EmptyGraph(RecurdetError):
    """No vertex survived pruning."""


class EmptyCluster(RecurdetError):
    """Operation requires a cluster with at least one member."""


class TooFewClusters(RecurdetError):
    """Fewer clusters than the operation needs."""


class SingleClass(RecurdetError):
    """SVM training needs both labels present."""


class WrongPhase(RecurdetError):
    """Session operation called in a phase that does not allow it."""


class IncompleteResponse(RecurdetError):
    """Label submission does not cover the full query batch."""


class InsufficientClusters(RecurdetError):
    """Too few unlabeled clusters remain near the margin to keep querying."""


class PlacementFailure(RecurdetError):
    """Rejection sampling could not place all scene instances."""


class ConfigError(RecurdetError):
    """Configuration failed validation."""


class PipelineError(RecurdetError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
