"""IDX container reader and writer (the MNIST distribution format)."""

import gzip
import struct
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ConfigError, FormatError, ShapeError
from .base import Dataset, DatasetSource

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_GZIP_MAGIC = b"\x1f\x8b"


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == _GZIP_MAGIC:
        return gzip.decompress(raw)
    return raw


def _parse(raw: bytes, expected_magic: int, path: Path) -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated before magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = expected_magic & 0xFF
    header_size = 4 + 4 * ndim
    if len(raw) < header_size:
        raise FormatError(f"{path}: truncated inside dimension sizes")
    dims = struct.unpack(f">{ndim}I", raw[4:header_size])
    count = int(np.prod(dims))
    if len(raw) - header_size < count:
        raise FormatError(
            f"{path}: truncated payload, expected {count} bytes, found {len(raw) - header_size}"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_size).reshape(dims)


def load_idx(images_path: Path | str, labels_path: Path | str) -> Dataset:
    """
    Parse an IDX image/label pair; gzip-compressed files are accepted transparently.

    Pixels are scaled to [0, 1] by dividing by 255.

    Raises:
        FileNotFoundError: If either file is missing
        FormatError: On bad magic, truncated payload, or count mismatch
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    for path in (images_path, labels_path):
        if not path.exists():
            raise FileNotFoundError(f"IDX file not found: {path}")

    images = _parse(_read_bytes(images_path), IMAGES_MAGIC, images_path)
    labels = _parse(_read_bytes(labels_path), LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    features = images.astype(np.float64) / 255.0
    return Dataset(
        features=features,
        labels=labels.astype(np.int64),
        feature_min=np.zeros(features.shape[1:]),
        feature_max=np.ones(features.shape[1:]),
        provenance=f"idx:{images_path.name}",
    )


def write_idx(path: Path | str, array: np.ndarray, compress: bool = False) -> Path:
    """
    Write a uint8 array as IDX: 3-D arrays as images, 1-D arrays as labels.

    Raises:
        ShapeError: For arrays that are neither 1-D nor 3-D
    """
    path = Path(path)
    data = np.asarray(array)
    if data.ndim == 3:
        magic = IMAGES_MAGIC
    elif data.ndim == 1:
        magic = LABELS_MAGIC
    else:
        raise ShapeError(f"IDX writer supports 1-D labels or 3-D images, got {data.ndim}-D")
    payload = struct.pack(f">I{data.ndim}I", magic, *data.shape) + data.astype(np.uint8).tobytes()
    if compress:
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)
    return path


class IdxSource(DatasetSource):
    """MNIST-style IDX image/label pair."""

    def __init__(self, config: dict[str, Any]):
        """
        Initialize the IDX source.

        Expected config:
            - images: Path to the images file (optionally gzipped)
            - labels: Path to the labels file (optionally gzipped)
            - limit: Optional cap on the number of samples read
        """
        super().__init__(config)
        self.images = config.get("images")
        self.labels = config.get("labels")
        self.limit = config.get("limit")

    @property
    def name(self) -> str:
        return "idx"

    def validate_config(self) -> bool:
        if not self.images:
            raise ConfigError("dataset.images is required for idx datasets")
        if not self.labels:
            raise ConfigError("dataset.labels is required for idx datasets")
        for field_name, value in (("images", self.images), ("labels", self.labels)):
            if not Path(value).exists():
                raise ConfigError(f"dataset.{field_name}: file not found: {value}")
        return True

    def load(self) -> Dataset:
        dataset = load_idx(self.images, self.labels)
        if self.limit:
            dataset = dataset.subset(np.arange(min(int(self.limit), len(dataset))))
        return dataset
