"""Nearest-rank quantiles, rank-based AUC and TPR at a calibrated FPR."""

import math

import numpy as np
import numpy.typing as npt
from scipy.stats import rankdata

from ..errors import InsufficientSamplesError

DIRECTIONS = ("above", "below")


def nearest_rank(values: npt.ArrayLike, p: float) -> float:
    """
    Nearest-rank percentile: the smallest value with at least a fraction p at or below it.

    Raises:
        ValueError: If ``values`` is empty or p lies outside [0, 1]
    """
    data = np.asarray(values, dtype=np.float64).ravel()
    if data.size == 0:
        raise ValueError("nearest_rank of an empty sample")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"percentile fraction {p} outside [0, 1]")
    # p * n may round to just above an integer rank
    return float(np.quantile(data, max(0.0, p - 1e-12), method="inverted_cdf"))


def interquartile_range(values: npt.ArrayLike) -> float:
    """75th minus 25th nearest-rank percentile."""
    return nearest_rank(values, 0.75) - nearest_rank(values, 0.25)


def rejection_count(n: int, fpr: float) -> int:
    """
    How many of ``n`` benign scores a threshold at ``fpr`` may reject.

    Raises:
        ValueError: If fpr lies outside (0, 1)
        InsufficientSamplesError: If n is too small to reject even one sample
    """
    if not 0.0 < fpr < 1.0:
        raise ValueError(f"FPR target {fpr} outside (0, 1)")
    k = math.floor(fpr * n + 1e-9)
    if k < 1:
        raise InsufficientSamplesError(
            f"{n} benign samples cannot resolve a {fpr:.2%} FPR "
            f"(need at least {math.ceil(1 / fpr - 1e-9)})"
        )
    return min(k, n - 1)


def upper_threshold(scores: npt.ArrayLike, fpr: float) -> float:
    """Threshold rejecting scores strictly above it: the nearest-rank (1 - fpr) quantile."""
    data = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    k = rejection_count(data.size, fpr)
    return float(data[data.size - k - 1])


def lower_threshold(scores: npt.ArrayLike, fpr: float) -> float:
    """Threshold rejecting scores strictly below it."""
    data = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    k = rejection_count(data.size, fpr)
    return float(data[k])


def _oriented(scores: npt.ArrayLike, direction: str) -> np.ndarray:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be 'above' or 'below', got {direction!r}")
    values = np.asarray(scores, dtype=np.float64).ravel()
    return values if direction == "above" else -values


def auc(benign_scores: npt.ArrayLike, adversarial_scores: npt.ArrayLike, direction: str = "above") -> float:
    """
    Mann-Whitney AUC: probability that an adversarial score outranks a benign
    one, ties counted one half. "below" treats smaller scores as suspicious.

    Raises:
        ValueError: If either set is empty
    """
    benign = _oriented(benign_scores, direction)
    adversarial = _oriented(adversarial_scores, direction)
    if benign.size == 0 or adversarial.size == 0:
        raise ValueError("auc needs non-empty benign and adversarial scores")
    ranks = rankdata(np.concatenate([benign, adversarial]), method="average")
    n_adv = adversarial.size
    u = ranks[benign.size :].sum() - n_adv * (n_adv + 1) / 2.0
    return float(u / (benign.size * n_adv))


def tpr_at_fpr(
    benign_scores: npt.ArrayLike,
    adversarial_scores: npt.ArrayLike,
    fpr: float,
    direction: str = "above",
) -> tuple[float, float]:
    """
    Fraction of adversarial scores rejected by the benign nearest-rank threshold.

    Returns:
        Tuple of (tpr, threshold)

    Raises:
        InsufficientSamplesError: If the benign set cannot resolve ``fpr``
    """
    _oriented(benign_scores, direction)
    adversarial = np.asarray(adversarial_scores, dtype=np.float64).ravel()
    if direction == "above":
        threshold = upper_threshold(benign_scores, fpr)
        rejected = adversarial > threshold
    else:
        threshold = lower_threshold(benign_scores, fpr)
        rejected = adversarial < threshold
    tpr = float(rejected.mean()) if adversarial.size else float("nan")
    return tpr, threshold
