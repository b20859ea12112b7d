"""Nearest-rank quantiles and acceptance intervals calibrated to a false-positive rate."""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from ..errors import ConfigError
from ..eval.metrics import (
    interquartile_range,
    lower_threshold,
    nearest_rank,
    rejection_count,
    upper_threshold,
)

SIDES = ("above", "below", "two-sided")

__all__ = [
    "SIDES",
    "AcceptanceInterval",
    "interquartile_range",
    "interval_for_fpr",
    "lower_threshold",
    "nearest_rank",
    "rejection_count",
    "upper_threshold",
]


@dataclass(frozen=True)
class AcceptanceInterval:
    """Closed range of scores accepted as benign; one end may be infinite."""

    lower: float
    upper: float
    side: str

    def __post_init__(self) -> None:
        if self.side not in SIDES:
            raise ConfigError(f"rejection side must be one of {', '.join(SIDES)}, got {self.side!r}")
        if self.lower > self.upper:
            raise ValueError(f"interval lower bound {self.lower} exceeds upper bound {self.upper}")

    def contains(self, scores: npt.ArrayLike) -> np.ndarray:
        values = np.asarray(scores, dtype=np.float64)
        return (values >= self.lower) & (values <= self.upper)

    def rejects(self, scores: npt.ArrayLike) -> np.ndarray:
        return ~self.contains(scores)

    def covers(self, other: "AcceptanceInterval") -> bool:
        return self.lower <= other.lower and self.upper >= other.upper

    @property
    def midpoint(self) -> float:
        if math.isinf(self.lower):
            return self.upper if math.isfinite(self.upper) else 0.0
        if math.isinf(self.upper):
            return self.lower
        return 0.5 * (self.lower + self.upper)

    def to_dict(self) -> dict[str, Any]:
        return {"lower": _encode(self.lower), "upper": _encode(self.upper), "side": self.side}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AcceptanceInterval":
        return cls(lower=_decode(data["lower"]), upper=_decode(data["upper"]), side=data["side"])


def _encode(value: float) -> float | str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _decode(value: float | str) -> float:
    return float(value)


def interval_for_fpr(scores: npt.ArrayLike, fpr: float, side: str) -> AcceptanceInterval:
    """
    Acceptance interval whose rejection rate on ``scores`` is at most ``fpr``.

    ``two-sided`` spends half of the budget on each tail. Intervals are
    nested: a lower target never yields a narrower interval.
    """
    if side == "above":
        return AcceptanceInterval(-math.inf, upper_threshold(scores, fpr), side)
    if side == "below":
        return AcceptanceInterval(lower_threshold(scores, fpr), math.inf, side)
    if side == "two-sided":
        half = fpr / 2.0
        return AcceptanceInterval(lower_threshold(scores, half), upper_threshold(scores, half), side)
    raise ConfigError(f"rejection side must be one of {', '.join(SIDES)}, got {side!r}")
