"""Dataset ingestion, synthetic generators and deterministic splits."""

from .base import Dataset, DatasetSource
from .idx import IdxSource, load_idx, write_idx
from .split import PARTITIONS, Splits, split, split_indices
from .synthetic import BlobsSource, SyntheticDigitsSource, synth_blobs, synth_digits
from .tabular import TabularEncoder, TabularSchema, TabularSource, load_tabular

DATASET_SOURCES: dict[str, type[DatasetSource]] = {
    "idx": IdxSource,
    "blobs": BlobsSource,
    "digits": SyntheticDigitsSource,
    "tabular": TabularSource,
}

__all__ = [
    "DATASET_SOURCES",
    "PARTITIONS",
    "BlobsSource",
    "Dataset",
    "DatasetSource",
    "IdxSource",
    "Splits",
    "SyntheticDigitsSource",
    "TabularEncoder",
    "TabularSchema",
    "TabularSource",
    "load_idx",
    "load_tabular",
    "split",
    "split_indices",
    "synth_blobs",
    "synth_digits",
    "write_idx",
]
