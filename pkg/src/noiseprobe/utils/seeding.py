"""Seed derivation and config fingerprinting."""

import hashlib
import json
from typing import Any

import numpy as np


def derive_seed(seed: int, *names: str | int) -> int:
    """
    Derive a child seed from the global seed and a stage path.

    Args:
        seed: Global pipeline seed
        names: Stage names or indices, e.g. ("attack", "pgd", 3)

    Returns:
        A non-negative 63-bit integer, stable across platforms and runs
    """
    text = ":".join([str(int(seed))] + [str(name) for name in names])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one sample of a batch: the seed plus the sample index."""
    return np.random.default_rng([int(seed), int(index)])


def config_hash(document: dict[str, Any]) -> str:
    """Stable hex digest of a config document (key order independent)."""
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
