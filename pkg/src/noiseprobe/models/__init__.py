"""Reference classifiers, training and weight persistence."""

from .persistence import load, load_file, save, save_file
from .spec import ModelSpec, build_layers, initialize
from .training import (
    SGD,
    Adam,
    TrainConfig,
    TrainedModel,
    TrainingRecord,
    accuracy,
    predict,
    train,
)

__all__ = [
    "SGD",
    "Adam",
    "ModelSpec",
    "TrainConfig",
    "TrainedModel",
    "TrainingRecord",
    "accuracy",
    "build_layers",
    "initialize",
    "load",
    "load_file",
    "predict",
    "save",
    "save_file",
    "train",
]
