"""noiseprobe - Flag adversarial inputs by probing classifiers with noise."""

__version__ = "0.1.0"

from .attacks import AdversarialBatch, AttackConfig, build_attack
from .data import Dataset, Splits, split
from .detectors import (
    DetectorCalibration,
    NoiseProbe,
    SensitivityPair,
    calibrate,
    detect,
    sensitivity,
)
from .eval import EvalReport, run_grid
from .models import ModelSpec, TrainConfig, TrainedModel, train
from .report import ReportGenerator

__all__ = [
    "AdversarialBatch",
    "AttackConfig",
    "Dataset",
    "DetectorCalibration",
    "EvalReport",
    "ModelSpec",
    "NoiseProbe",
    "ReportGenerator",
    "SensitivityPair",
    "Splits",
    "TrainConfig",
    "TrainedModel",
    "build_attack",
    "calibrate",
    "detect",
    "run_grid",
    "sensitivity",
    "split",
    "train",
]
