"""Nearest-centroid prediction with a calibrated confidence-gap abstention rule."""

__version__ = "0.1.0"

from .calibration import CalibrationResult, Metric, calibrate, score_at_threshold
from .core import (
    CentroidIndex,
    Dataset,
    Distance,
    FeatureSample,
    GapMeasurement,
    SplitRole,
    compute_centroids,
    measure_all,
    nearest_two,
)
from .errors import GapError
from .evaluation import (
    EvaluationReport,
    GapHistogram,
    OutcomeCategory,
    PartitionKind,
    Prediction,
    baseline_knn_predict,
    categorize,
    evaluate,
    frequency_partition,
    gap_histogram,
    predict_split,
)
from .synth import SynthConfig, generate

__all__ = [
    "CalibrationResult",
    "CentroidIndex",
    "Dataset",
    "Distance",
    "EvaluationReport",
    "FeatureSample",
    "GapError",
    "GapHistogram",
    "GapMeasurement",
    "Metric",
    "OutcomeCategory",
    "PartitionKind",
    "Prediction",
    "SplitRole",
    "SynthConfig",
    "baseline_knn_predict",
    "calibrate",
    "categorize",
    "compute_centroids",
    "evaluate",
    "frequency_partition",
    "gap_histogram",
    "generate",
    "measure_all",
    "nearest_two",
    "predict_split",
    "score_at_threshold",
]
