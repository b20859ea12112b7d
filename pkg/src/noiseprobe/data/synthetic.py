"""Seeded synthetic datasets for desk-scale runs without downloaded data."""

from typing import Any

import numpy as np

from ..errors import ConfigError
from .base import Dataset, DatasetSource


def synth_blobs(
    classes: int,
    dims: int,
    n: int,
    separation: float,
    seed: int,
    unit_range: bool = True,
) -> Dataset:
    """
    Gaussian clusters, one per class, with unit within-class spread.

    Class centers are random unit directions scaled by ``separation``; with
    separation 0 every class shares the same distribution. When
    ``unit_range`` is set the features are min-max scaled into [0, 1] so
    clipped attacks apply.
    """
    if classes < 2:
        raise ConfigError("dataset.classes must be at least 2")
    if dims < 1 or n < classes:
        raise ConfigError("dataset.dims must be positive and dataset.n at least dataset.classes")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((classes, dims))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = separation * directions
    labels = rng.permutation(np.arange(n) % classes)
    features = centers[labels] + rng.standard_normal((n, dims))
    if unit_range:
        low, high = features.min(axis=0), features.max(axis=0)
        span = np.where(high > low, high - low, 1.0)
        features = (features - low) / span
    return Dataset(features=features, labels=labels, provenance=f"blobs:seed={seed}")


def synth_digits(n: int, seed: int, size: int = 8, classes: int = 4, noise: float = 0.1) -> Dataset:
    """
    Small single-channel images of class-specific strokes.

    Class 0 is a horizontal bar, 1 a vertical bar, 2 the main diagonal and 3
    the anti-diagonal; each image shifts its stroke by up to one pixel and
    adds Gaussian pixel noise, clipped to [0, 1].
    """
    if not 2 <= classes <= 4:
        raise ConfigError("dataset.classes must be between 2 and 4 for digits")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % classes)
    images = np.zeros((n, size, size))
    centre = size // 2
    idx = np.arange(size)
    for i, label in enumerate(labels):
        shift = int(rng.integers(-1, 2))
        if label == 0:
            images[i, centre + shift, :] = 1.0
        elif label == 1:
            images[i, :, centre + shift] = 1.0
        elif label == 2:
            images[i, idx, np.clip(idx + shift, 0, size - 1)] = 1.0
        else:
            images[i, idx, np.clip(size - 1 - idx + shift, 0, size - 1)] = 1.0
    images = np.clip(images + noise * rng.standard_normal(images.shape), 0.0, 1.0)
    return Dataset(
        features=images,
        labels=labels,
        feature_min=np.zeros((size, size)),
        feature_max=np.ones((size, size)),
        provenance=f"digits:seed={seed}",
    )


class BlobsSource(DatasetSource):
    """Synthetic Gaussian blobs."""

    def __init__(self, config: dict[str, Any]):
        super().__init__(config)
        self.classes = int(config.get("classes", 2))
        self.dims = int(config.get("dims", 2))
        self.n = int(config.get("n", 1000))
        self.separation = float(config.get("separation", 4.0))
        self.seed = int(config.get("seed", 0))

    @property
    def name(self) -> str:
        return "blobs"

    def validate_config(self) -> bool:
        if self.classes < 2:
            raise ConfigError("dataset.classes must be at least 2")
        if self.n < self.classes:
            raise ConfigError("dataset.n must be at least dataset.classes")
        return True

    def load(self) -> Dataset:
        return synth_blobs(self.classes, self.dims, self.n, self.separation, self.seed)


class SyntheticDigitsSource(DatasetSource):
    """Synthetic stroke images, for image-only code paths without MNIST."""

    def __init__(self, config: dict[str, Any]):
        super().__init__(config)
        self.n = int(config.get("n", 1000))
        self.size = int(config.get("size", 8))
        self.classes = int(config.get("classes", 4))
        self.noise = float(config.get("noise", 0.1))
        self.seed = int(config.get("seed", 0))

    @property
    def name(self) -> str:
        return "digits"

    def validate_config(self) -> bool:
        if not 2 <= self.classes <= 4:
            raise ConfigError("dataset.classes must be between 2 and 4 for digits")
        if self.size < 4:
            raise ConfigError("dataset.size must be at least 4")
        return True

    def load(self) -> Dataset:
        return synth_digits(self.n, self.seed, self.size, self.classes, self.noise)
