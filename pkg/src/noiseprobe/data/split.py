"""Deterministic stratified splits."""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InsufficientSamplesError
from .base import Dataset

PARTITIONS = ("train", "calibrate", "holdout", "test")


@dataclass
class Splits:
    """The four disjoint partitions of a dataset."""

    train: Dataset
    calibrate: Dataset
    holdout: Dataset
    test: Dataset

    def __iter__(self) -> Iterator[Dataset]:
        return iter((self.train, self.calibrate, self.holdout, self.test))


def _check_fractions(fractions: Sequence[float]) -> np.ndarray:
    values = np.asarray(fractions, dtype=np.float64)
    if values.shape != (len(PARTITIONS),):
        raise ConfigError(f"split needs {len(PARTITIONS)} fractions, got {len(values)}")
    if np.any(values < 0):
        raise ConfigError("split fractions must be non-negative")
    if abs(values.sum() - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {values.sum():.6g}")
    return values


def _allocate(count: int, fractions: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation of ``count`` items to the partitions."""
    exact = fractions * count
    sizes = np.floor(exact).astype(np.int64)
    remainder = count - int(sizes.sum())
    order = np.argsort(-(exact - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes


def split_indices(
    labels: np.ndarray, fractions: Sequence[float], seed: int
) -> tuple[np.ndarray, ...]:
    """
    Stratified index assignment, one sorted index array per partition.

    Raises:
        ConfigError: If the fractions are malformed
        InsufficientSamplesError: If a partition with a positive fraction ends up empty
    """
    values = _check_fractions(fractions)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in PARTITIONS]
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        bounds = np.concatenate([[0], np.cumsum(_allocate(len(members), values))])
        for p in range(len(PARTITIONS)):
            parts[p].append(members[bounds[p] : bounds[p + 1]])

    result = tuple(
        np.sort(np.concatenate(chunks)) if chunks else np.array([], dtype=np.int64)
        for chunks in parts
    )
    for name, fraction, index in zip(PARTITIONS, values, result, strict=True):
        if fraction > 0 and len(index) == 0:
            raise InsufficientSamplesError(
                f"split fraction {fraction:g} leaves the {name} partition empty "
                f"for {len(labels)} samples"
            )
    pooled = np.concatenate(result[1:3])
    if np.intersect1d(pooled, result[3]).size:
        raise InsufficientSamplesError("calibration pool overlaps the evaluation pool")
    return result


def split(dataset: Dataset, fractions: Sequence[float], seed: int) -> Splits:
    """Split into (train, calibrate, holdout, test), stratified by label."""
    index = split_indices(dataset.labels, fractions, seed)
    return Splits(
        *(
            dataset.subset(part, provenance=f"{dataset.provenance}#{name}")
            for name, part in zip(PARTITIONS, index, strict=True)
        )
    )
