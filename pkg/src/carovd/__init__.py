"""carovd: carotid ultrasound video pipeline.

Stages: media ingest -> UI/Doppler preprocessing -> clip sampling ->
classification and voting -> cohort stratification report. Every stage is a
pure function over explicit inputs so batches parallelize without changing
output bytes.
"""

from .classify import (
    AggregationPolicy,
    ClipPrediction,
    IndividualPrediction,
    Label,
    ModelHandle,
    ModelKind,
    VideoPrediction,
    aggregate_individual,
    load_model,
    predict_clip,
    save_model,
    train_builtin,
    vote_video,
)
from .media import ColorMode, FrameVolume, Site, VideoMeta, load_video, probe_metadata
from .preprocess import (
    DopplerVerdict,
    Excluded,
    PreprocessConfig,
    UiMask,
    apply_ui_removal,
    compute_ui_mask,
    crop_bottom,
    doppler_score,
    preprocess_video,
)
from .sampling import (
    AugConfig,
    ClipIndexPlan,
    ClipTensor,
    NormStats,
    augment,
    class_weights,
    export_clips,
    extract_clip,
    normalize,
    plan_clips,
)
from .stats import (
    ConfusionMatrix,
    IndividualRecord,
    StratReport,
    accuracy,
    alignment_by_age,
    balanced_accuracy,
    confusion,
    event_table,
    prevalence_ratio,
    quartiles,
    read_cohort_table,
    split_cohort,
    stratify,
    write_cohort_table,
)
from .synth import SynthCohortSpec, SynthVideoSpec, gen_cohort, gen_video, write_corpus

__version__ = "0.1.0"
