"""Schema-driven tabular CSV ingestion with one-hot encoding and min-max scaling."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ..errors import ConfigError, FormatError
from .base import Dataset, DatasetSource
from .split import split_indices

logger = logging.getLogger(__name__)


@dataclass
class TabularSchema:
    """
    Column roles of a CSV file.

    ``collapse`` maps raw label values to classes; values missing from the
    map get ``collapse_default``. Without a map, labels are numbered in
    sorted order of their distinct values.
    """

    label: str
    numeric: list[str] = field(default_factory=list)
    categorical: list[str] = field(default_factory=list)
    collapse: dict[str, int] | None = None
    collapse_default: int = 1

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TabularSchema":
        if "label" not in data:
            raise ConfigError("dataset.schema.label is required")
        collapse = data.get("collapse")
        return cls(
            label=str(data["label"]),
            numeric=[str(c) for c in data.get("numeric", [])],
            categorical=[str(c) for c in data.get("categorical", [])],
            collapse={str(k): int(v) for k, v in collapse.items()} if collapse else None,
            collapse_default=int(data.get("collapse_default", 1)),
        )

    def check_columns(self, frame: pd.DataFrame) -> None:
        missing = [c for c in [self.label, *self.numeric, *self.categorical] if c not in frame]
        if missing:
            raise FormatError(f"CSV is missing schema columns: {', '.join(missing)}")


def read_frame(csv_path: Path | str, schema: TabularSchema) -> pd.DataFrame:
    """Read every cell as text; parsing happens in the encoder."""
    path = Path(csv_path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]
    schema.check_columns(frame)
    return frame


def _numeric_block(frame: pd.DataFrame, columns: list[str]) -> np.ndarray:
    block = np.empty((len(frame), len(columns)))
    for j, column in enumerate(columns):
        parsed = pd.to_numeric(frame[column], errors="coerce")
        bad = parsed.isna().to_numpy() | ~np.isfinite(parsed.to_numpy(dtype=np.float64))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise FormatError(
                f"unparseable numeric cell at row {row + 2}, column {column!r}: "
                f"{frame[column].iloc[row]!r}"
            )
        block[:, j] = parsed.to_numpy(dtype=np.float64)
    return block


class TabularEncoder:
    """Scaling statistics and category vocabularies fitted on training rows only."""

    def __init__(self, schema: TabularSchema):
        self.schema = schema
        self.minimum: np.ndarray | None = None
        self.maximum: np.ndarray | None = None
        self.categories: dict[str, list[str]] = {}
        self.label_values: list[str] = []
        self.unseen_count = 0

    def fit(self, frame: pd.DataFrame) -> "TabularEncoder":
        numeric = _numeric_block(frame, self.schema.numeric)
        self.minimum = numeric.min(axis=0) if len(frame) else np.zeros(len(self.schema.numeric))
        self.maximum = numeric.max(axis=0) if len(frame) else np.zeros(len(self.schema.numeric))
        self.categories = {
            column: sorted(frame[column].unique().tolist()) for column in self.schema.categorical
        }
        self.label_values = sorted(frame[self.schema.label].unique().tolist())
        return self

    @property
    def feature_names(self) -> list[str]:
        names = list(self.schema.numeric)
        for column in self.schema.categorical:
            names += [f"{column}={value}" for value in self.categories[column]]
        return names

    def transform_features(self, frame: pd.DataFrame) -> np.ndarray:
        """
        Min-max scale numeric columns and one-hot encode categorical ones.

        Zero-range columns scale to 0. Values beyond the fitted range are
        clipped into [0, 1]. Unseen categories become all-zero indicator rows
        and are counted in ``unseen_count``.
        """
        if self.minimum is None or self.maximum is None:
            raise RuntimeError("encoder must be fitted before transform")
        numeric = _numeric_block(frame, self.schema.numeric)
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        scaled = np.where(span > 0, (numeric - self.minimum) / safe, 0.0)
        blocks = [np.clip(scaled, 0.0, 1.0)]

        for column in self.schema.categorical:
            vocabulary = self.categories[column]
            values = frame[column].to_numpy()
            codes = pd.Categorical(values, categories=vocabulary).codes
            unseen = int(np.sum(codes < 0))
            if unseen:
                self.unseen_count += unseen
                logger.warning(
                    "column %r: %d rows with unseen categories encoded as all zeros",
                    column,
                    unseen,
                )
            onehot = np.zeros((len(frame), len(vocabulary)))
            seen = codes >= 0
            onehot[np.flatnonzero(seen), codes[seen]] = 1.0
            blocks.append(onehot)
        return np.hstack(blocks) if blocks else np.zeros((len(frame), 0))

    def transform_labels(self, frame: pd.DataFrame) -> np.ndarray:
        raw = frame[self.schema.label].to_numpy()
        if self.schema.collapse is not None:
            collapse = self.schema.collapse
            return np.array(
                [collapse.get(value, self.schema.collapse_default) for value in raw],
                dtype=np.int64,
            )
        lookup = {value: index for index, value in enumerate(self.label_values)}
        unknown = sorted({value for value in raw if value not in lookup})
        if unknown:
            raise FormatError(f"label values not seen in training rows: {', '.join(unknown)}")
        return np.array([lookup[value] for value in raw], dtype=np.int64)

    @property
    def class_names(self) -> list[str]:
        if self.schema.collapse is not None:
            return ["normal", "attack"]
        return list(self.label_values)


def _raw_labels(frame: pd.DataFrame, schema: TabularSchema) -> np.ndarray:
    encoder = TabularEncoder(schema)
    encoder.label_values = sorted(frame[schema.label].unique().tolist())
    return encoder.transform_labels(frame)


def load_tabular(
    csv_path: Path | str,
    schema: TabularSchema,
    encoder: TabularEncoder | None = None,
    fit_rows: np.ndarray | None = None,
) -> Dataset:
    """
    Read a CSV into a Dataset.

    Args:
        csv_path: File with a header row
        schema: Column roles
        encoder: Previously fitted encoder (e.g. from a training file)
        fit_rows: Row indices to fit a fresh encoder on; all rows when omitted

    Raises:
        FileNotFoundError: If the file is missing
        FormatError: On missing columns or an unparseable numeric cell
    """
    frame = read_frame(csv_path, schema)
    if encoder is None:
        rows = frame if fit_rows is None else frame.iloc[np.asarray(fit_rows, dtype=np.int64)]
        encoder = TabularEncoder(schema).fit(rows)
    features = encoder.transform_features(frame)
    return Dataset(
        features=features,
        labels=encoder.transform_labels(frame),
        provenance=f"csv:{Path(csv_path).name}",
        class_names=encoder.class_names,
    )


class TabularSource(DatasetSource):
    """CSV file with IDS-style preprocessing."""

    def __init__(self, config: dict[str, Any]):
        """
        Initialize the tabular source.

        Expected config:
            - path: CSV file with a header row
            - schema: label / numeric / categorical / collapse
            - split, seed: filled in from the run so that scaling statistics
              come from the training partition only
        """
        super().__init__(config)
        self.path = config.get("path")
        self.schema_data = config.get("schema") or {}
        self.fractions = config.get("split")
        self.seed = int(config.get("seed", 0))

    @property
    def name(self) -> str:
        return "tabular"

    def validate_config(self) -> bool:
        if not self.path:
            raise ConfigError("dataset.path is required for tabular datasets")
        if not Path(self.path).exists():
            raise ConfigError(f"dataset.path: file not found: {self.path}")
        TabularSchema.from_dict(self.schema_data)
        return True

    def load(self) -> Dataset:
        schema = TabularSchema.from_dict(self.schema_data)
        fit_rows = None
        if self.fractions is not None:
            frame = read_frame(self.path, schema)
            fit_rows = split_indices(_raw_labels(frame, schema), self.fractions, self.seed)[0]
        return load_tabular(self.path, schema, fit_rows=fit_rows)
