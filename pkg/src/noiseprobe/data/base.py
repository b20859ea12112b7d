"""Dataset container and the base interface for dataset sources."""

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ShapeError


@dataclass
class Dataset:
    """Features (n x feature shape), integer labels, and per-feature range metadata."""

    features: np.ndarray
    labels: np.ndarray
    feature_min: np.ndarray | None = None
    feature_max: np.ndarray | None = None
    provenance: str = ""
    indices: np.ndarray | None = None
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"dataset has {self.features.shape[0]} samples but {self.labels.shape[0]} labels"
            )
        if self.feature_min is None and len(self.features):
            self.feature_min = self.features.min(axis=0)
        if self.feature_max is None and len(self.features):
            self.feature_max = self.features.max(axis=0)
        if self.indices is None:
            self.indices = np.arange(len(self.labels))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return tuple(self.features.shape[1:])

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, index: np.ndarray, provenance: str | None = None) -> "Dataset":
        """Rows at ``index``; range metadata is carried over from the parent."""
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            features=self.features[index],
            labels=self.labels[index],
            feature_min=self.feature_min,
            feature_max=self.feature_max,
            provenance=provenance or self.provenance,
            indices=np.asarray(self.indices)[index],
            class_names=list(self.class_names),
        )

    def fingerprint(self) -> str:
        """Short content hash used to tie calibrations to the data they came from."""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.features).tobytes())
        digest.update(np.ascontiguousarray(self.labels).tobytes())
        return digest.hexdigest()[:16]


class DatasetSource(ABC):
    """Abstract base class for all dataset sources."""

    def __init__(self, config: dict[str, Any]):
        """
        Initialize the source with configuration.

        Args:
            config: The ``dataset`` section of a run configuration
        """
        self.config = config

    @abstractmethod
    def load(self) -> Dataset:
        """Read or generate the full dataset."""
        pass

    @abstractmethod
    def validate_config(self) -> bool:
        """
        Validate that the source is properly configured.

        Returns:
            True if configuration is valid, raises ConfigError otherwise
        """
        pass

    @property
    @abstractmethod
    def name(self) -> str:
        """Return the name of this source."""
        pass
