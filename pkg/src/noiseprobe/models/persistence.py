"""Weight file container.

Layout (all integers little-endian)::

    magic     4 bytes  b"NPWT"
    version   uint16
    hlen      uint32   length of the JSON header
    header    hlen bytes, UTF-8 JSON: spec, layers, record, parameter names/shapes
    payload   float64 little-endian arrays in header order
"""

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from ..diffcore import Graph, layer_from_dict
from ..errors import ConfigError, FormatError
from .spec import ModelSpec
from .training import TrainedModel, TrainingRecord

MAGIC = b"NPWT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")


def save(model: TrainedModel) -> bytes:
    """Serialize a trained model to bytes."""
    names = list(model.graph.parameters)
    header = {
        "spec": model.spec.to_dict(),
        "input_shape": list(model.graph.input_shape),
        "layers": [layer.describe() for layer in model.graph.layers],
        "record": {
            "epochs": model.record.epochs,
            "seed": model.record.seed,
            "test_accuracy": model.record.test_accuracy,
            "loss_history": list(model.record.loss_history),
            "config_hash": model.record.config_hash,
        },
        "parameters": [
            {"name": name, "shape": list(model.graph.parameters[name].shape)} for name in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)), header_bytes]
    for name in names:
        chunks.append(np.ascontiguousarray(model.graph.parameters[name], dtype="<f8").tobytes())
    return b"".join(chunks)


def load(data: bytes) -> TrainedModel:
    """
    Deserialize a trained model.

    Raises:
        FormatError: On bad magic, unsupported version, truncation, or a header that
            does not describe a valid model
    """
    if len(data) < _PREFIX.size:
        raise FormatError("weight file truncated: missing prefix")
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"weight file has bad magic {magic!r}, expected {MAGIC!r}")
    if version > FORMAT_VERSION:
        raise FormatError(
            f"weight file format version {version} is newer than supported version {FORMAT_VERSION}"
        )
    offset = _PREFIX.size
    if len(data) < offset + header_len:
        raise FormatError("weight file truncated inside header")
    try:
        header: dict[str, Any] = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"weight file header is not valid JSON: {e}") from e
    offset += header_len

    try:
        entries = [(str(e["name"]), tuple(int(d) for d in e["shape"])) for e in header["parameters"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"weight file header has a malformed parameter list: {e}") from e

    parameters: dict[str, np.ndarray] = {}
    for name, shape in entries:
        nbytes = int(np.prod(shape)) * 8
        if len(data) < offset + nbytes:
            raise FormatError(f"weight file truncated in parameter {name}")
        parameters[name] = (
            np.frombuffer(data, dtype="<f8", count=int(np.prod(shape)), offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"weight file has {len(data) - offset} trailing bytes")

    try:
        spec = ModelSpec.from_dict(dict(header["spec"]))
        spec.validate()
        layers = tuple(layer_from_dict(entry) for entry in header["layers"])
        graph = Graph(tuple(header["input_shape"]), layers, parameters)
        record = TrainingRecord(**header["record"])
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise FormatError(f"weight file header is inconsistent: {e}") from e
    return TrainedModel(spec=spec, graph=graph, record=record)


def save_file(model: TrainedModel, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save(model))
    return path


def load_file(path: Path | str) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    return load(path.read_bytes())
