"""Noise-probe sensitivity detector.

Each input is perturbed once with Gaussian noise whose standard deviation is
the input's value range times ``spread``. Prediction sensitivity (PS) is the
L1 change of the logits, attribution sensitivity (AS) the L1 change of the
Integrated Gradients map for the class predicted on the clean input. A
sample is rejected when either statistic leaves its acceptance interval.
"""

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from ..attribution import DEFAULT_STEPS, ig_batch
from ..diffcore import Classifier, Tensor, as_graph, forward
from ..errors import ConfigError, DegenerateScoresError, FormatError, InsufficientSamplesError
from ..eval.metrics import auc
from .thresholds import AcceptanceInterval, interval_for_fpr

logger = logging.getLogger(__name__)

METRICS = ("ps", "as")
DEFAULT_FPR_TARGETS = (0.01, 0.05, 0.10)
MIN_CALIBRATION_SAMPLES = 500


@dataclass(frozen=True)
class NoiseProbe:
    """Gaussian noise source; one generator per (seed, sample index, draw)."""

    spread: float
    seed: int = 0
    draws: int = 1
    zero_noise: bool = False
    ig_steps: int = DEFAULT_STEPS
    chunk: int = 256

    def validate(self) -> None:
        if not self.spread > 0:
            raise ConfigError(f"probe.spread must be positive, got {self.spread}")
        if self.draws < 1:
            raise ConfigError("probe.draws must be at least 1")
        if self.ig_steps < 1:
            raise ConfigError("probe.ig_steps must be at least 1")

    def sigma(self, x: Tensor) -> float:
        return float(np.max(x) - np.min(x)) * self.spread

    def noise(self, x: Tensor, index: int, draw: int = 0) -> Tensor:
        sigma = self.sigma(x)
        if self.zero_noise or sigma == 0:
            return np.zeros_like(x)
        rng = np.random.default_rng([int(self.seed), int(index), int(draw)])
        return rng.normal(0.0, sigma, size=x.shape)

    def with_seed(self, seed: int) -> "NoiseProbe":
        return replace(self, seed=seed)

    def with_spread(self, spread: float) -> "NoiseProbe":
        return replace(self, spread=spread)

    def to_dict(self) -> dict[str, Any]:
        return {
            "spread": self.spread,
            "seed": self.seed,
            "draws": self.draws,
            "zero_noise": self.zero_noise,
            "ig_steps": self.ig_steps,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NoiseProbe":
        known = {"spread", "seed", "draws", "zero_noise", "ig_steps", "chunk"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown probe fields: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(frozen=True)
class SensitivityPair:
    ps: float
    as_: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        for name, value in (("ps", self.ps), ("as", self.as_)):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


@dataclass
class SensitivityScores:
    """PS and AS for a batch, aligned with the sample indices that seeded the noise."""

    ps: np.ndarray
    as_: np.ndarray
    degenerate: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.ps.shape[0])

    def metric(self, name: str) -> np.ndarray:
        return self.ps if name == "ps" else self.as_

    def pair(self, i: int) -> SensitivityPair:
        return SensitivityPair(float(self.ps[i]), float(self.as_[i]), bool(self.degenerate[i]))


def _samples(data: Any) -> Tensor:
    return np.asarray(getattr(data, "features", data), dtype=np.float64)


def _indices(data: Any, count: int, indices: npt.ArrayLike | None) -> np.ndarray:
    if indices is not None:
        return np.asarray(indices, dtype=np.int64)
    own = getattr(data, "indices", None)
    if own is not None:
        return np.asarray(own, dtype=np.int64)
    return np.arange(count)


def pair_from_noisy(
    model: Classifier,
    x: npt.ArrayLike,
    x_noisy: npt.ArrayLike,
    m: int = DEFAULT_STEPS,
) -> SensitivityPair:
    """PS and AS between a sample and a given noisy copy of it."""
    graph = as_graph(model)
    clean, _ = graph.as_batch(x)
    noisy, _ = graph.as_batch(x_noisy)
    logits = forward(graph, clean)
    targets = np.argmax(logits, axis=1)
    ps = np.abs(forward(graph, noisy) - logits).sum()
    as_ = np.abs(ig_batch(graph, noisy, targets, m) - ig_batch(graph, clean, targets, m)).sum()
    return SensitivityPair(float(ps), float(as_))


def sensitivity_batch(
    model: Classifier,
    xs: Any,
    probe: NoiseProbe,
    indices: npt.ArrayLike | None = None,
) -> SensitivityScores:
    """
    PS and AS for every sample, averaged over ``probe.draws`` noise draws.

    Noisy samples are not clipped to the input domain. The IG target is the
    class predicted on the clean sample and is reused for the noisy one.
    """
    probe.validate()
    graph = as_graph(model)
    batch, _ = graph.as_batch(_samples(xs))
    ids = _indices(xs, len(batch), indices)
    if len(ids) != len(batch):
        raise ValueError(f"{len(batch)} samples but {len(ids)} indices")

    ps = np.zeros(len(batch))
    as_ = np.zeros(len(batch))
    degenerate = np.array([probe.sigma(x) == 0 for x in batch])
    step = max(1, probe.chunk)
    for start in range(0, len(batch), step):
        clean = batch[start : start + step]
        logits = forward(graph, clean)
        targets = np.argmax(logits, axis=1)
        attribution = ig_batch(graph, clean, targets, probe.ig_steps, chunk=probe.chunk)
        for draw in range(probe.draws):
            noisy = clean + np.stack(
                [probe.noise(x, i, draw) for x, i in zip(clean, ids[start : start + step])]
            )
            delta_logits = forward(graph, noisy) - logits
            delta_ig = ig_batch(graph, noisy, targets, probe.ig_steps, chunk=probe.chunk) - attribution
            ps[start : start + step] += np.abs(delta_logits).sum(axis=1)
            as_[start : start + step] += np.abs(delta_ig.reshape(len(clean), -1)).sum(axis=1)
    ps /= probe.draws
    as_ /= probe.draws
    ps[degenerate] = 0.0
    as_[degenerate] = 0.0
    return SensitivityScores(ps=ps, as_=as_, degenerate=degenerate, indices=ids)


def sensitivity(model: Classifier, x: npt.ArrayLike, probe: NoiseProbe, index: int = 0) -> SensitivityPair:
    """(PS, AS) of one sample; constant inputs give (0, 0) flagged as degenerate."""
    graph = as_graph(model)
    batch, _ = graph.as_batch(x)
    return sensitivity_batch(graph, batch, probe, [index]).pair(0)


# ===== CALIBRATION =====


def _oriented_cdf(reference: np.ndarray, scores: np.ndarray, side: str) -> np.ndarray:
    """Mid-rank empirical CDF of ``scores`` against the benign reference, oriented by side."""
    ordered = np.sort(reference)
    left = np.searchsorted(ordered, scores, side="left")
    right = np.searchsorted(ordered, scores, side="right")
    cdf = (left + right) / (2.0 * len(ordered))
    if side == "above":
        return cdf
    if side == "below":
        return 1.0 - cdf
    return np.abs(2.0 * cdf - 1.0)


@dataclass
class DetectorCalibration:
    """Acceptance intervals for one FPR target, plus the probe and benign reference they came from."""

    probe: NoiseProbe
    fpr_target: float
    intervals: dict[str, AcceptanceInterval]
    reference: dict[str, np.ndarray] = field(default_factory=dict)
    holdout_fpr: dict[str, float] = field(default_factory=dict)
    train_fpr: dict[str, float] = field(default_factory=dict)
    combined_holdout_fpr: float = 0.0
    validation_auc: dict[str, float] = field(default_factory=dict)
    fingerprint: str = ""
    rule: str = "or-reject"

    @property
    def metrics(self) -> tuple[str, ...]:
        return tuple(name for name in METRICS if name in self.intervals)

    def restricted(self, metrics: Sequence[str]) -> "DetectorCalibration":
        """Copy that only checks the given metrics."""
        missing = [m for m in metrics if m not in self.intervals]
        if missing:
            raise ConfigError(f"calibration has no interval for {', '.join(missing)}")
        return replace(self, intervals={m: self.intervals[m] for m in metrics})

    def rejects(self, scores: SensitivityScores) -> np.ndarray:
        """OR-reject: adversarial when any checked metric is outside its interval."""
        flags = np.zeros(len(scores), dtype=bool)
        for name, interval in self.intervals.items():
            flags |= interval.rejects(scores.metric(name))
        return flags

    def combined_score(self, scores: SensitivityScores) -> np.ndarray:
        """Max over checked metrics of the oriented benign CDF; larger is more suspicious."""
        columns = [
            _oriented_cdf(self.reference[name], scores.metric(name), interval.side)
            for name, interval in self.intervals.items()
        ]
        return np.max(np.vstack(columns), axis=0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "probe": self.probe.to_dict(),
            "fpr_target": self.fpr_target,
            "rule": self.rule,
            "intervals": {name: iv.to_dict() for name, iv in self.intervals.items()},
            "holdout_fpr": self.holdout_fpr,
            "train_fpr": self.train_fpr,
            "combined_holdout_fpr": self.combined_holdout_fpr,
            "validation_auc": self.validation_auc,
            "fingerprint": self.fingerprint,
            "reference": {name: values.tolist() for name, values in self.reference.items()},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DetectorCalibration":
        return cls(
            probe=NoiseProbe.from_dict(data["probe"]),
            fpr_target=float(data["fpr_target"]),
            intervals={
                name: AcceptanceInterval.from_dict(iv) for name, iv in data["intervals"].items()
            },
            reference={name: np.asarray(v, dtype=np.float64) for name, v in data.get("reference", {}).items()},
            holdout_fpr=dict(data.get("holdout_fpr", {})),
            train_fpr=dict(data.get("train_fpr", {})),
            combined_holdout_fpr=float(data.get("combined_holdout_fpr", 0.0)),
            validation_auc=dict(data.get("validation_auc", {})),
            fingerprint=data.get("fingerprint", ""),
            rule=data.get("rule", "or-reject"),
        )


def save_calibrations(
    calibrations: dict[float, DetectorCalibration],
    path: Path | str,
    meta: dict[str, Any] | None = None,
) -> Path:
    """Write every calibration to one JSON document; ``meta`` is stored alongside."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        **(meta or {}),
        "calibrations": [cal.to_dict() for _, cal in sorted(calibrations.items())],
    }
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_calibrations(path: Path | str) -> dict[float, DetectorCalibration]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Calibration file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        return {
            float(entry["fpr_target"]): DetectorCalibration.from_dict(entry)
            for entry in document["calibrations"]
        }
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: not a valid calibration file: {e}") from e


def choose_side(benign: np.ndarray, adversarial: np.ndarray) -> tuple[str, float]:
    """Rejection side with the better validation AUC; "above" on ties."""
    above = auc(benign, adversarial, "above")
    return ("above", above) if above >= 0.5 else ("below", 1.0 - above)


def calibrate(
    model: Classifier,
    benign_train: Any,
    benign_holdout: Any,
    probe: NoiseProbe,
    fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
    validation: tuple[Any, Any] | None = None,
    sides: dict[str, str] | None = None,
    min_samples: int = MIN_CALIBRATION_SAMPLES,
    fingerprint: str = "",
) -> dict[float, DetectorCalibration]:
    """
    Calibrate PS and AS acceptance intervals for every FPR target.

    Thresholds come from the hold-out benign scores so that the hold-out
    FPR of each metric matches the target. The training pool serves as the
    benign reference for the combined score and for the degenerate check.

    Args:
        model: Classifier under protection
        benign_train: Benign reference pool (Dataset or array), at least ``min_samples``
        benign_holdout: Benign samples the thresholds are fitted on
        probe: Noise probe
        fpr_targets: Allowed per-metric false-positive rates
        validation: Optional (benign, adversarial) pair used to pick each metric's side
        sides: Explicit sides per metric; overrides validation
        min_samples: Minimum size of the reference pool
        fingerprint: Dataset fingerprint to record

    Raises:
        InsufficientSamplesError: If a pool is too small for the targets
        DegenerateScoresError: If a metric is constant on the benign pool
    """
    probe.validate()
    train_x, holdout_x = _samples(benign_train), _samples(benign_holdout)
    if len(train_x) < min_samples:
        raise InsufficientSamplesError(
            f"calibration needs at least {min_samples} benign samples, got {len(train_x)}"
        )
    train = sensitivity_batch(model, benign_train, probe)
    holdout = sensitivity_batch(model, benign_holdout, probe)
    for name in METRICS:
        values = train.metric(name)
        if np.ptp(values) == 0:
            raise DegenerateScoresError(
                f"{name} is constant ({values[0]:.3g}) on the benign pool; "
                "check the spread or the model"
            )

    chosen: dict[str, str] = {name: "above" for name in METRICS}
    validation_auc: dict[str, float] = {}
    if validation is not None:
        benign_v = sensitivity_batch(model, validation[0], probe)
        adversarial_v = sensitivity_batch(model, validation[1], probe)
        for name in METRICS:
            chosen[name], validation_auc[name] = choose_side(
                benign_v.metric(name), adversarial_v.metric(name)
            )
    if sides:
        chosen.update(sides)

    calibrations: dict[float, DetectorCalibration] = {}
    for target in sorted(fpr_targets):
        intervals = {
            name: interval_for_fpr(holdout.metric(name), target, chosen[name]) for name in METRICS
        }
        calibration = DetectorCalibration(
            probe=probe,
            fpr_target=float(target),
            intervals=intervals,
            reference={name: train.metric(name).copy() for name in METRICS},
            holdout_fpr={
                name: float(intervals[name].rejects(holdout.metric(name)).mean()) for name in METRICS
            },
            train_fpr={
                name: float(intervals[name].rejects(train.metric(name)).mean()) for name in METRICS
            },
            validation_auc=validation_auc,
            fingerprint=fingerprint,
        )
        calibration.combined_holdout_fpr = float(calibration.rejects(holdout).mean())
        logger.info(
            "fpr target %.2f: ps %s, as %s, combined hold-out fpr %.4f",
            target,
            intervals["ps"],
            intervals["as"],
            calibration.combined_holdout_fpr,
        )
        calibrations[float(target)] = calibration
    return calibrations


def detect_batch(
    model: Classifier,
    xs: Any,
    calibration: DetectorCalibration,
    indices: npt.ArrayLike | None = None,
) -> tuple[np.ndarray, SensitivityScores]:
    """Adversarial flags (True = adversarial) and the scores behind them."""
    scores = sensitivity_batch(model, xs, calibration.probe, indices)
    return calibration.rejects(scores), scores


def detect(
    model: Classifier, x: npt.ArrayLike, calibration: DetectorCalibration, index: int = 0
) -> tuple[str, SensitivityPair]:
    graph = as_graph(model)
    batch, _ = graph.as_batch(x)
    flags, scores = detect_batch(graph, batch, calibration, [index])
    return ("adversarial" if flags[0] else "benign"), scores.pair(0)


def flip_rate(
    model: Classifier, xs: Any, calibration: DetectorCalibration, other_seed: int
) -> float:
    """Fraction of decisions that change when only the probe seed changes."""
    first, _ = detect_batch(model, xs, calibration)
    reseeded = replace(calibration, probe=calibration.probe.with_seed(other_seed))
    second, _ = detect_batch(model, xs, reseeded)
    return float(np.mean(first != second)) if len(first) else 0.0


# ===== SPREAD SWEEP =====


def spread_grid(start: float = 0.001, delta: float = 0.001, count: int = 10) -> list[float]:
    """Incremental grid start, start + delta, ... (count points)."""
    if count < 1:
        raise ConfigError("sweep.count must be at least 1")
    if start <= 0 or delta < 0:
        raise ConfigError("sweep.start must be positive and sweep.delta non-negative")
    return [round(start + i * delta, 12) for i in range(count)]


@dataclass
class SweepPoint:
    spread: float
    auc: float
    auc_ps: float
    auc_as: float


@dataclass
class SweepResult:
    best_spread: float
    curve: list[SweepPoint]

    def to_rows(self) -> list[dict[str, float]]:
        return [
            {"spread": p.spread, "auc": p.auc, "auc_ps": p.auc_ps, "auc_as": p.auc_as}
            for p in self.curve
        ]


def sweep_spread(
    model: Classifier,
    benign: Any,
    adversarial: Any,
    spreads: Sequence[float],
    seed: int = 0,
    ig_steps: int = DEFAULT_STEPS,
) -> SweepResult:
    """
    Validation AUC of the combined score at every spread; the best spread wins.

    Each metric is oriented by its own validation AUC and scored against the
    benign set itself; ties go to the smaller spread.
    """
    if len(spreads) == 0:
        raise ConfigError("spread grid is empty")
    curve: list[SweepPoint] = []
    for spread in spreads:
        probe = NoiseProbe(spread=float(spread), seed=seed, ig_steps=ig_steps)
        benign_scores = sensitivity_batch(model, benign, probe)
        adversarial_scores = sensitivity_batch(model, adversarial, probe)
        per_metric: dict[str, float] = {}
        benign_columns, adversarial_columns = [], []
        for name in METRICS:
            reference = benign_scores.metric(name)
            side, per_metric[name] = choose_side(reference, adversarial_scores.metric(name))
            benign_columns.append(_oriented_cdf(reference, reference, side))
            adversarial_columns.append(_oriented_cdf(reference, adversarial_scores.metric(name), side))
        combined = auc(
            np.max(np.vstack(benign_columns), axis=0),
            np.max(np.vstack(adversarial_columns), axis=0),
            "above",
        )
        curve.append(SweepPoint(float(spread), combined, per_metric["ps"], per_metric["as"]))
        logger.info("spread %g: combined auc %.4f", spread, combined)
    best = max(curve, key=lambda point: point.auc)
    return SweepResult(best_spread=best.spread, curve=curve)
