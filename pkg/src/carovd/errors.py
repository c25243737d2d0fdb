"""Exception types shared across the pipeline.

Names match the error contracts of the operations that raise them, so
callers can catch precisely the failure they care about.
"""

from __future__ import annotations


class CarovdError(Exception):
    """Base class for all pipeline errors."""


# --- media ingest ---------------------------------------------------------

class IngestError(CarovdError):
    """Base class for decode/probe failures."""


class UnreadableFile(IngestError):
    """Path missing, not accessible, or not a regular file/directory."""


class UnsupportedFormat(IngestError):
    """Input is neither the DICOM subset nor a frame-sequence directory."""


class CorruptHeader(IngestError):
    """Container metadata is damaged or inconsistent."""


class PixelDataTruncated(IngestError):
    """Pixel payload shorter than the header-declared geometry."""


class UnsupportedTransferSyntax(IngestError):
    """DICOM transfer syntax outside the uncompressed explicit-VR-LE subset."""


# --- preprocess -----------------------------------------------------------

class PreprocessError(CarovdError):
    pass


class SingleFrameVideo(PreprocessError):
    """Temporal variance is undefined for a one-frame video."""


class ShapeMismatch(CarovdError):
    """Array shapes disagree (mask vs volume, clip vs model signature)."""


class CropExceedsHeight(PreprocessError):
    """Requested bottom crop leaves no rows."""


# --- clip sampling --------------------------------------------------------

class SamplingError(CarovdError):
    pass


class VideoTooShort(SamplingError):
    """Fewer frames than the clip length."""


class IndexOutOfRange(SamplingError):
    """Clip plan references frames beyond the volume."""


class AlreadyNormalized(SamplingError):
    """normalize() called twice on the same clip."""


class SingleClassDataset(CarovdError):
    """Both classes are required (weights, training)."""


# --- classification -------------------------------------------------------

class ClassifyError(CarovdError):
    pass


class ModelLoadError(ClassifyError):
    """Model card or artifact missing/invalid."""


class NotNormalized(ClassifyError):
    """predict_clip requires a normalized clip."""


class EmptyPredictionSet(ClassifyError):
    """vote_video on zero clip predictions."""


class MixedVideoIds(ClassifyError):
    """vote_video received predictions from several videos."""


class EmptySet(ClassifyError):
    """aggregate_individual on zero video predictions."""


# --- cohort statistics ----------------------------------------------------

class StatsError(CarovdError):
    pass


class EmptyCohort(StatsError):
    pass


class LengthMismatch(StatsError):
    """Prediction/truth vectors of different length."""


class UndefinedClassRecall(StatsError):
    """A class has zero support, so its recall is undefined."""


class EmptyInput(StatsError):
    pass


class MissingVdLabel(StatsError):
    """An individual has no visual-damage label."""


# --- synthetic data -------------------------------------------------------

class InvalidSpec(CarovdError):
    """Synthetic generation spec violates its own invariants."""


# --- batch driver ---------------------------------------------------------

class IdMismatch(CarovdError):
    """Prediction dump references individuals absent from the cohort table."""


class MalformedCohortTable(CarovdError):
    """Cohort table cannot be parsed against the documented header."""
