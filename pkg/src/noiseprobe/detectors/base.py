"""Detector interface and the concrete detectors the evaluation grid runs."""

import hashlib
import logging
import weakref
from abc import ABC, abstractmethod
from collections import OrderedDict
from collections.abc import Sequence
from typing import Any

import numpy as np
import numpy.typing as npt

from ..diffcore import Classifier, as_graph
from ..errors import ConfigError
from .baselines import fs_scores, tws_scores, uloo_scores
from .sensitivity import (
    DEFAULT_FPR_TARGETS,
    MIN_CALIBRATION_SAMPLES,
    DetectorCalibration,
    NoiseProbe,
    SensitivityScores,
    calibrate,
    choose_side,
    sensitivity_batch,
)
from .thresholds import SIDES, AcceptanceInterval, interval_for_fpr

logger = logging.getLogger(__name__)


def _features(data: Any) -> np.ndarray:
    return np.asarray(getattr(data, "features", data), dtype=np.float64)


def _ids(data: Any, indices: npt.ArrayLike | None) -> np.ndarray | None:
    if indices is not None:
        return np.asarray(indices, dtype=np.int64)
    own = getattr(data, "indices", None)
    return None if own is None else np.asarray(own, dtype=np.int64)


class ScoreCache:
    """
    Small LRU of PS/AS results keyed by model and a digest of the batch.

    Entries hold a weak reference to the model graph, so a recycled ``id``
    of a collected model never produces a hit.
    """

    def __init__(self, maxsize: int = 16):
        self.maxsize = maxsize
        self._entries: OrderedDict[tuple[int, bytes], tuple[weakref.ref, SensitivityScores]] = (
            OrderedDict()
        )

    @staticmethod
    def fingerprint(features: np.ndarray, ids: np.ndarray | None, probe: NoiseProbe) -> bytes:
        digest = hashlib.sha256(repr(probe).encode())
        digest.update(str(features.shape).encode())
        digest.update(np.ascontiguousarray(features).tobytes())
        if ids is not None:
            digest.update(np.ascontiguousarray(ids).tobytes())
        return digest.digest()

    def get(self, model: Classifier, fingerprint: bytes) -> SensitivityScores | None:
        graph = as_graph(model)
        key = (id(graph), fingerprint)
        entry = self._entries.get(key)
        if entry is None:
            return None
        ref, scores = entry
        if ref() is not graph:
            del self._entries[key]
            return None
        self._entries.move_to_end(key)
        return scores

    def put(self, model: Classifier, fingerprint: bytes, scores: SensitivityScores) -> None:
        graph = as_graph(model)
        self._entries[(id(graph), fingerprint)] = (weakref.ref(graph), scores)
        while len(self._entries) > self.maxsize:
            self._entries.popitem(last=False)

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


class BaseDetector(ABC):
    """Abstract base class for all detectors."""

    def __init__(self, config: dict[str, Any]):
        """
        Initialize the detector with configuration.

        Args:
            config: The detector's section of the run configuration
        """
        self.config = config
        self.side = config.get("side", self.default_side)
        self.intervals: dict[float, AcceptanceInterval] = {}

    default_side = "above"

    @property
    @abstractmethod
    def name(self) -> str:
        """Return the registry name of this detector."""
        pass

    def validate_config(self) -> bool:
        """
        Validate that the detector is properly configured.

        Returns:
            True if configuration is valid, raises ConfigError otherwise
        """
        if self.side not in SIDES:
            raise ConfigError(f"{self.name}.side must be one of {', '.join(SIDES)}")
        return True

    @abstractmethod
    def scores(
        self, model: Classifier, xs: Any, indices: npt.ArrayLike | None = None
    ) -> np.ndarray:
        """One suspicion score per sample."""
        pass

    def fit(
        self,
        model: Classifier,
        benign_train: Any,
        benign_holdout: Any,
        fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
        validation: tuple[Any, Any] | None = None,
    ) -> "BaseDetector":
        """Pick the rejection side and fit one acceptance interval per FPR target."""
        holdout = self.scores(model, benign_holdout)
        if validation is not None and "side" not in self.config:
            self.side, _ = choose_side(
                self.scores(model, validation[0]), self.scores(model, validation[1])
            )
        self.intervals = {
            float(target): interval_for_fpr(holdout, target, self.side) for target in fpr_targets
        }
        logger.info("%s fitted on %d hold-out samples, side %s", self.name, len(holdout), self.side)
        return self

    def flags(
        self,
        model: Classifier,
        xs: Any,
        fpr_target: float,
        indices: npt.ArrayLike | None = None,
        scores: np.ndarray | None = None,
    ) -> np.ndarray:
        """True where the sample is rejected at the given calibrated FPR target."""
        if fpr_target not in self.intervals:
            raise ConfigError(f"{self.name} was not fitted for FPR target {fpr_target}")
        values = self.scores(model, xs, indices) if scores is None else scores
        return self.intervals[fpr_target].rejects(values)

    def clear_cache(self) -> None:
        """Drop memoised scores; detectors without a cache have nothing to drop."""

    @property
    def direction(self) -> str:
        """Score orientation for AUC: larger is more suspicious when "above"."""
        return "below" if self.side == "below" else "above"


class SensitivityDetector(BaseDetector):
    """
    Noise-probe detector: OR-reject over PS and AS.

    ``metrics`` selects the statistics that are checked, so the PS-only and
    AS-only ablations are the same detector with one metric. Scores for the
    AUC are the combined oriented benign CDF, so they are always "above".
    """

    def __init__(self, config: dict[str, Any], metrics: Sequence[str] = ("ps", "as")):
        super().__init__(config)
        self.metrics = tuple(metrics)
        probe_config = dict(config.get("probe", {}))
        probe_config.setdefault("spread", 0.005)
        self.probe = NoiseProbe.from_dict(probe_config)
        self.min_samples = int(config.get("min_samples", MIN_CALIBRATION_SAMPLES))
        self.calibrations: dict[float, DetectorCalibration] = {}
        self.full_calibrations: dict[float, DetectorCalibration] = {}
        self._cache = ScoreCache(int(config.get("cache_size", 16)))

    @property
    def name(self) -> str:
        if self.metrics == ("ps", "as"):
            return "sensitivity"
        return f"sensitivity_{'_'.join(self.metrics)}"

    def validate_config(self) -> bool:
        super().validate_config()
        self.probe.validate()
        if not self.metrics or any(m not in ("ps", "as") for m in self.metrics):
            raise ConfigError(f"sensitivity metrics must be drawn from ps, as; got {self.metrics}")
        return True

    def pair_scores(
        self, model: Classifier, xs: Any, indices: npt.ArrayLike | None = None
    ) -> SensitivityScores:
        features = _features(xs)
        ids = _ids(xs, indices)
        fingerprint = ScoreCache.fingerprint(features, ids, self.probe)
        cached = self._cache.get(model, fingerprint)
        if cached is None:
            cached = sensitivity_batch(model, features, self.probe, ids)
            self._cache.put(model, fingerprint, cached)
        return cached

    def clear_cache(self) -> None:
        self._cache.clear()

    def share_cache(self, other: "SensitivityDetector") -> None:
        """Reuse another detector's PS/AS computations (same probe)."""
        if other.probe == self.probe:
            self._cache = other._cache

    def fit(
        self,
        model: Classifier,
        benign_train: Any,
        benign_holdout: Any,
        fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
        validation: tuple[Any, Any] | None = None,
    ) -> "SensitivityDetector":
        sides = self.config.get("sides")
        calibrations = calibrate(
            model,
            benign_train,
            benign_holdout,
            self.probe,
            fpr_targets,
            validation=validation,
            sides=sides,
            min_samples=self.min_samples,
            fingerprint=getattr(benign_train, "fingerprint", lambda: "")(),
        )
        self.use_calibrations(calibrations)
        return self

    def use_calibrations(self, calibrations: dict[float, DetectorCalibration]) -> None:
        """Adopt calibrations fitted elsewhere, keeping only this detector's metrics."""
        self.full_calibrations = calibrations
        self.calibrations = {
            target: calibration.restricted(self.metrics)
            for target, calibration in calibrations.items()
        }
        first = next(iter(self.calibrations.values()))
        self.probe = first.probe

    def scores(self, model: Classifier, xs: Any, indices: npt.ArrayLike | None = None) -> np.ndarray:
        if not self.calibrations:
            raise ConfigError("sensitivity detector must be fitted before scoring")
        calibration = next(iter(self.calibrations.values()))
        return calibration.combined_score(self.pair_scores(model, xs, indices))

    def flags(
        self,
        model: Classifier,
        xs: Any,
        fpr_target: float,
        indices: npt.ArrayLike | None = None,
        scores: np.ndarray | None = None,
    ) -> np.ndarray:
        if fpr_target not in self.calibrations:
            raise ConfigError(f"{self.name} was not fitted for FPR target {fpr_target}")
        return self.calibrations[fpr_target].rejects(self.pair_scores(model, xs, indices))

    @property
    def direction(self) -> str:
        return "above"


class TWSDetector(BaseDetector):
    """Softmax change under the same noise probe; benign inputs are assumed to move more."""

    default_side = "below"

    def __init__(self, config: dict[str, Any]):
        super().__init__(config)
        probe_config = dict(config.get("probe", {}))
        probe_config.setdefault("spread", 0.005)
        self.probe = NoiseProbe.from_dict(probe_config)

    @property
    def name(self) -> str:
        return "tws"

    def scores(self, model: Classifier, xs: Any, indices: npt.ArrayLike | None = None) -> np.ndarray:
        features = _features(xs)
        return tws_scores(model, features, self.probe, _ids(xs, indices))


class ULOODetector(BaseDetector):
    """Interquartile range of the attribution map."""

    def __init__(self, config: dict[str, Any]):
        super().__init__(config)
        self.steps = int(config.get("ig_steps", 64))
        self.attribution = config.get("attribution", "ig")

    @property
    def name(self) -> str:
        return "uloo"

    def validate_config(self) -> bool:
        super().validate_config()
        if self.attribution not in ("ig", "loo"):
            raise ConfigError("uloo.attribution must be 'ig' or 'loo'")
        return True

    def scores(self, model: Classifier, xs: Any, indices: npt.ArrayLike | None = None) -> np.ndarray:
        return uloo_scores(model, _features(xs), self.steps, self.attribution)


class FeatureSqueezingDetector(BaseDetector):
    """Prediction change under bit-depth reduction and median smoothing."""

    def __init__(self, config: dict[str, Any]):
        super().__init__(config)
        self.bits = config.get("bits", "auto")
        self.median_size = config.get("median_size", 2)

    @property
    def name(self) -> str:
        return "fs"

    def validate_config(self) -> bool:
        super().validate_config()
        if self.bits not in (None, "auto") and (
            not isinstance(self.bits, int) or not 1 <= self.bits <= 16
        ):
            raise ConfigError("fs.bits must be 'auto' or an integer between 1 and 16")
        if self.median_size is not None and int(self.median_size) < 1:
            raise ConfigError("fs.median_size must be positive")
        return True

    def scores(self, model: Classifier, xs: Any, indices: npt.ArrayLike | None = None) -> np.ndarray:
        return fs_scores(model, _features(xs), self.bits, self.median_size)


DETECTOR_CLASSES: dict[str, Any] = {
    "sensitivity": lambda config: SensitivityDetector(config, ("ps", "as")),
    "sensitivity_ps": lambda config: SensitivityDetector(config, ("ps",)),
    "sensitivity_as": lambda config: SensitivityDetector(config, ("as",)),
    "tws": TWSDetector,
    "uloo": ULOODetector,
    "fs": FeatureSqueezingDetector,
}


def build_detectors(names: Sequence[str], config: dict[str, Any]) -> list[BaseDetector]:
    """
    Instantiate detectors by registry name; sensitivity variants share one score cache.

    Args:
        names: Registry names, e.g. ["sensitivity", "tws"]
        config: Mapping from detector name to its settings; sensitivity
            variants fall back to the "sensitivity" section
    """
    unknown = [name for name in names if name not in DETECTOR_CLASSES]
    if unknown:
        raise ConfigError(
            f"unknown detector(s) {', '.join(unknown)}; valid: {', '.join(DETECTOR_CLASSES)}"
        )
    detectors: list[BaseDetector] = []
    shared: SensitivityDetector | None = None
    for name in names:
        section = config.get(name, config.get("sensitivity", {}) if name.startswith("sensitivity") else {})
        detector = DETECTOR_CLASSES[name](dict(section or {}))
        detector.validate_config()
        if isinstance(detector, SensitivityDetector):
            if shared is None:
                shared = detector
            else:
                detector.share_cache(shared)
        detectors.append(detector)
    return detectors


def fit_detectors(
    detectors: Sequence[BaseDetector],
    model: Classifier,
    benign_train: Any,
    benign_holdout: Any,
    fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
    validation: tuple[Any, Any] | None = None,
) -> None:
    """Fit every detector; sensitivity variants reuse the first variant's calibration."""
    calibrated: SensitivityDetector | None = None
    for detector in detectors:
        if isinstance(detector, SensitivityDetector) and calibrated is not None:
            detector.use_calibrations(calibrated.full_calibrations)
            continue
        detector.fit(model, benign_train, benign_holdout, fpr_targets, validation)
        if isinstance(detector, SensitivityDetector):
            calibrated = detector
