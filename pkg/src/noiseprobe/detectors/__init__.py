"""Noise-probe sensitivity detector and reference baselines."""

from .base import (
    DETECTOR_CLASSES,
    BaseDetector,
    FeatureSqueezingDetector,
    SensitivityDetector,
    TWSDetector,
    ULOODetector,
    build_detectors,
    fit_detectors,
)
from .baselines import (
    default_bits,
    fs_score,
    fs_scores,
    tws_score,
    tws_scores,
    uloo_score,
    uloo_scores,
)
from .sensitivity import (
    DEFAULT_FPR_TARGETS,
    METRICS,
    DetectorCalibration,
    NoiseProbe,
    SensitivityPair,
    SensitivityScores,
    SweepResult,
    calibrate,
    detect,
    detect_batch,
    flip_rate,
    load_calibrations,
    pair_from_noisy,
    save_calibrations,
    sensitivity,
    sensitivity_batch,
    spread_grid,
    sweep_spread,
)
from .thresholds import (
    SIDES,
    AcceptanceInterval,
    interquartile_range,
    interval_for_fpr,
    lower_threshold,
    nearest_rank,
    upper_threshold,
)

__all__ = [
    "DEFAULT_FPR_TARGETS",
    "DETECTOR_CLASSES",
    "METRICS",
    "SIDES",
    "AcceptanceInterval",
    "BaseDetector",
    "DetectorCalibration",
    "FeatureSqueezingDetector",
    "NoiseProbe",
    "SensitivityDetector",
    "SensitivityPair",
    "SensitivityScores",
    "SweepResult",
    "TWSDetector",
    "ULOODetector",
    "build_detectors",
    "calibrate",
    "default_bits",
    "detect",
    "detect_batch",
    "fit_detectors",
    "flip_rate",
    "fs_score",
    "fs_scores",
    "interquartile_range",
    "interval_for_fpr",
    "load_calibrations",
    "lower_threshold",
    "nearest_rank",
    "pair_from_noisy",
    "save_calibrations",
    "sensitivity",
    "sensitivity_batch",
    "spread_grid",
    "sweep_spread",
    "tws_score",
    "tws_scores",
    "uloo_score",
    "uloo_scores",
    "upper_threshold",
]
