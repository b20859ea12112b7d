"""Utility functions."""

from .seeding import config_hash, derive_seed, sample_rng

__all__ = ["config_hash", "derive_seed", "sample_rng"]
