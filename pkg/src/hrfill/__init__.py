"""hrfill: estimate wrist heart rate from phone sensors and fill stream gaps.

The pipeline runs raw channel CSVs (accelerometer, GPS, heart rate) through
1 Hz grid alignment, feature engineering (motion deviation, rounded location,
time of day), and a set of predictors (ridge, RBF epsilon-SVR, CART random
forest, and a prior-window moving-average baseline), evaluated per
participant in bpm or pooled across participants in z-scores.
"""

import logging

from .errors import ConvergenceError, DataError, HrfillError, NumericError
from .evaluate import (
    EvalOptions,
    EvaluationReport,
    FillResult,
    FoldAssignment,
    MetricEntry,
    export_prediction_trace,
    export_report,
    export_trace_rows,
    fill_gaps,
    import_report,
    kfold_split,
    r_squared,
    rmse,
    run_generalized,
    run_personalized,
)
from .features import (
    FEATURE_NAMES,
    FeatureMatrix,
    ZScoreParams,
    build_feature_matrix,
    complete_case_indices,
    round_coordinate,
    time_components,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)
from .ingest import (
    AlignedStream,
    GapMask,
    SensorRecord,
    SensorRecords,
    align_streams,
    detect_gaps,
    parse_channel_file,
    read_aligned_csv,
    write_aligned_csv,
)
from .models import (
    ImportanceTable,
    ModelSpec,
    TrainedModel,
    baseline_interpolate,
    build_importance_table,
    fit_model,
    forest_fit,
    importance_permutation_oob,
    importance_split_gain,
    load_model,
    predict,
    ridge_fit,
    save_model,
    svr_fit,
)
from .synthgen import GapPattern, SynthConfig, generate_cohort, generate_participant, inject_gaps

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "AlignedStream",
    "ConvergenceError",
    "DataError",
    "EvalOptions",
    "EvaluationReport",
    "FEATURE_NAMES",
    "FeatureMatrix",
    "FillResult",
    "FoldAssignment",
    "GapMask",
    "GapPattern",
    "HrfillError",
    "ImportanceTable",
    "MetricEntry",
    "ModelSpec",
    "NumericError",
    "SensorRecord",
    "SensorRecords",
    "SynthConfig",
    "TrainedModel",
    "ZScoreParams",
    "align_streams",
    "baseline_interpolate",
    "build_feature_matrix",
    "build_importance_table",
    "complete_case_indices",
    "detect_gaps",
    "export_prediction_trace",
    "export_report",
    "export_trace_rows",
    "fill_gaps",
    "fit_model",
    "forest_fit",
    "generate_cohort",
    "generate_participant",
    "import_report",
    "importance_permutation_oob",
    "importance_split_gain",
    "inject_gaps",
    "kfold_split",
    "load_model",
    "parse_channel_file",
    "predict",
    "r_squared",
    "read_aligned_csv",
    "ridge_fit",
    "rmse",
    "round_coordinate",
    "run_generalized",
    "run_personalized",
    "save_model",
    "svr_fit",
    "time_components",
    "write_aligned_csv",
    "zscore_apply",
    "zscore_fit",
    "zscore_invert",
]
