"""Exception types shared across the toolkit."""


class SldScreenError(Exception):
    """Base class for all toolkit errors."""


class DecodeError(SldScreenError):
    """Image bytes could not be decoded (truncated, corrupt, or unsupported)."""


class BackboneShapeError(SldScreenError):
    """Backbone model output dimension is not 1280."""


class InferenceError(SldScreenError):
    """Backbone evaluation failed or produced non-finite values."""


class NumericError(SldScreenError):
    """A head computation produced non-finite intermediates or gradients."""


class SplitError(SldScreenError):
    """Dataset split sizes mismatch or stratification is infeasible."""


class LengthMismatch(SldScreenError):
    """Scores and labels have different lengths."""


class EmptyInput(SldScreenError):
    """Metric computation received no examples."""


class SingleClassError(SldScreenError):
    """ROC/AUC requires both classes to be present."""


class FormatError(SldScreenError):
    """Model artifact or cache file has a bad magic or is truncated."""


class VersionError(SldScreenError):
    """Model artifact format version is not supported."""


class ShapeError(SldScreenError):
    """Model artifact dimension table deviates from the expected head shapes."""


class BackboneMismatch(SldScreenError):
    """Loaded backbone digest does not match the artifact's recorded digest."""
