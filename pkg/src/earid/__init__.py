"""In-ear EEG biometrics: conditioning, features, protocols, classifiers.

The package evaluates two-channel in-ear EEG verification and
identification on synthetic multi-subject, multi-day recordings.  See the
README for the pipeline walkthrough and the ``earid`` CLI.
"""

from .classifiers import (
    CosineNearestClassifier,
    SMOSVC,
    ShrinkageLDA,
    dump_model,
    identify,
    tune_svm,
)
from .dataset import (
    DatasetManifest,
    GeneratorConfig,
    SubjectProfile,
    generate_dataset,
    load_dataset,
    subject_profile,
)
from .errors import (
    CohortStructureError,
    DatasetError,
    DuplicateTrialError,
    EaridError,
    FeatureExtractionError,
    MissingSampleFileError,
    NotConvergedError,
    ProtocolError,
    SampleSizeMismatchError,
    UndefinedMetricError,
)
from .evaluate import (
    condition_recordings,
    extract_features,
    run_identification,
    run_split,
    run_verification,
)
from .features import (
    FEATURE_NAMES,
    FEATURE_SETS,
    FeatureMatrix,
    PsdEstimate,
    alpha_ar_features,
    build_feature_matrix,
    burg_ar,
    psd_features,
    welch_psd,
    welch_series,
)
from .metrics import (
    BinaryCounts,
    MultiConfusion,
    aggregate_verification,
    display_verification,
    identification_metrics,
    verification_metrics,
)
from .protocol import (
    MinMaxNormalizer,
    NormalizationBounds,
    SplitPlan,
    apply_bounds,
    enumerate_runs,
    fit_bounds,
    make_split,
    materialize,
)
from .signal import (
    FilterSpec,
    Recording,
    Segment,
    design_bandpass,
    filter_recording,
    preprocess,
    reject_artifacts,
    segmentize,
    trim_head,
)

__version__ = "0.1.0"
