"""Attack x epsilon x detector evaluation grid."""

import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from ..attacks import AttackConfig, build_attack
from ..data import Dataset, Splits
from ..diffcore import Classifier
from ..errors import ConfigError, InsufficientSamplesError
from ..models import predict
from ..utils import derive_seed
from .metrics import auc

if TYPE_CHECKING:
    from ..detectors import BaseDetector, DetectorCalibration

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "attack",
    "epsilon",
    "detector",
    "auc",
    "auc_std",
    "tpr_fpr01",
    "tpr_fpr05",
    "tpr_fpr10",
    "fpr_emp",
    "n_benign",
    "n_adv",
]

TPR_COLUMNS = {0.01: "tpr_fpr01", 0.05: "tpr_fpr05", 0.10: "tpr_fpr10"}


@dataclass
class EvalRow:
    """Mean (and AUC std) of one (attack, epsilon, detector) cell over the repeats."""

    attack: str
    epsilon: float
    detector: str
    auc: float
    auc_std: float
    tpr: dict[float, float]
    fpr_emp: float
    n_benign: int
    n_adv: int
    success_rate: float = 0.0
    flagged: bool = False

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "attack": self.attack,
            "epsilon": self.epsilon,
            "detector": self.detector,
            "auc": self.auc,
            "auc_std": self.auc_std,
        }
        for target, column in TPR_COLUMNS.items():
            record[column] = self.tpr.get(target, math.nan)
        record.update(fpr_emp=self.fpr_emp, n_benign=self.n_benign, n_adv=self.n_adv)
        return record


@dataclass
class EvalReport:
    rows: list[EvalRow]
    config: dict[str, Any]
    seed: int
    repeats: int
    seeds: dict[str, int] = field(default_factory=dict)
    success_rates: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        for row in self.rows:
            values = [row.auc, row.fpr_emp, *row.tpr.values()]
            if any(not math.isnan(v) and not 0.0 <= v <= 1.0 for v in values):
                raise ValueError(f"metric outside [0, 1] in row {row.attack}/{row.detector}")

    def to_frame(self) -> pd.DataFrame:
        """Rows in the fixed report column order."""
        return pd.DataFrame([row.to_record() for row in self.rows], columns=REPORT_COLUMNS)

    @property
    def flagged(self) -> list[EvalRow]:
        return [row for row in self.rows if row.flagged]

    def row(self, attack: str, epsilon: float, detector: str) -> EvalRow:
        for candidate in self.rows:
            if (
                candidate.attack == attack
                and math.isclose(candidate.epsilon, epsilon)
                and candidate.detector == detector
            ):
                return candidate
        raise KeyError(f"no row for {attack} eps={epsilon} detector={detector}")

    def provenance(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "seed": self.seed,
            "repeats": self.repeats,
            "seeds": self.seeds,
            "success_rates": self.success_rates,
            "flagged": [f"{r.attack}@{r.epsilon:g}/{r.detector}" for r in self.flagged],
            "rows": [asdict(row) | {"tpr": {str(k): v for k, v in row.tpr.items()}} for row in self.rows],
        }


def correctly_classified(model: Classifier, dataset: Dataset) -> Dataset:
    """Rows the model labels correctly; indices are kept so noise draws stay tied to samples."""
    if len(dataset) == 0:
        return dataset
    _, predicted = predict(model, dataset.features)
    return dataset.subset(np.flatnonzero(predicted == dataset.labels))


def _draw(pool: Dataset, samples: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    size = min(samples, len(pool))
    return pool.subset(np.sort(rng.choice(len(pool), size=size, replace=False)))


def validation_pair(
    model: Classifier, holdout: Dataset, attack: AttackConfig, seed: int, samples: int = 1000
) -> tuple[Dataset, Dataset] | None:
    """
    Benign hold-out draw and its successful adversarial counterparts, used
    to orient each detector's rejection side. None when the attack never succeeds.
    """
    benign = _draw(correctly_classified(model, holdout), samples, derive_seed(seed, "validation"))
    config = replace(attack, seed=derive_seed(seed, "validation", attack.kind, attack.epsilon))
    batch = build_attack(config).generate(model, benign.features, benign.labels)
    mask = batch.success_mask
    if not mask.any():
        logger.warning("validation attack %s never succeeded; detectors keep default sides", attack.kind)
        return None
    adversarial = Dataset(
        features=batch.perturbed[mask],
        labels=batch.adversarial_labels[mask],
        indices=np.asarray(benign.indices)[mask],
        provenance=f"{benign.provenance}+{attack.kind}",
    )
    return benign, adversarial


def run_grid(
    model: Classifier,
    splits: Splits,
    detectors: Sequence["BaseDetector"],
    attacks: Sequence[AttackConfig],
    repeats: int = 10,
    seed: int = 0,
    samples: int = 1000,
    fpr_targets: Sequence[float] = (0.01, 0.05, 0.10),
    validation_attack: AttackConfig | None = None,
    fit: bool = True,
    config: dict[str, Any] | None = None,
) -> EvalReport:
    """
    Evaluate every detector against every attack configuration.

    Detectors are fitted once (calibrate partition as the benign reference,
    holdout partition for thresholds), so one calibration per FPR target is
    shared by all attacks. Each repeat draws up to ``samples`` correctly
    classified test samples, attacks them, and scores every detector on the
    benign draw and on the successful adversarial samples.

    Args:
        model: Classifier under attack
        splits: Dataset partitions
        detectors: Detector instances (fitted in place unless ``fit`` is False)
        attacks: One config per (kind, epsilon) cell
        repeats: Number of independent benign draws
        seed: Global seed; every draw and attack seed derives from it
        samples: Benign draw size per repeat
        fpr_targets: Calibrated FPR targets to report TPR at
        validation_attack: Optional attack used to orient rejection sides
        fit: Fit the detectors before evaluating
        config: Config document echoed into the report

    Returns:
        EvalReport with one row per (attack, epsilon, detector)

    Raises:
        ConfigError: If attacks or detectors are empty or repeats < 1
        InsufficientSamplesError: If no test sample is classified correctly
    """
    if not attacks:
        raise ConfigError("run_grid needs at least one attack")
    if not detectors:
        raise ConfigError("run_grid needs at least one detector")
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    targets = sorted(float(t) for t in fpr_targets)
    emp_target = 0.05 if 0.05 in targets else targets[0]

    if fit:
        from ..detectors import fit_detectors

        validation = None
        if validation_attack is not None:
            validation = validation_pair(model, splits.holdout, validation_attack, seed, samples)
        fit_detectors(detectors, model, splits.calibrate, splits.holdout, targets, validation)

    pool = correctly_classified(model, splits.test)
    if len(pool) == 0:
        raise InsufficientSamplesError("no correctly classified test samples to evaluate on")

    # cell key -> lists over repeats
    aucs: dict[tuple[str, float, str], list[float]] = defaultdict(list)
    tprs: dict[tuple[str, float, str], dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    fprs: dict[str, list[float]] = defaultdict(list)
    n_adv: dict[tuple[str, float], list[int]] = defaultdict(list)
    rates: dict[tuple[str, float], list[float]] = defaultdict(list)
    seeds: dict[str, int] = {}
    n_benign = 0

    for r in range(repeats):
        draw_seed = derive_seed(seed, "repeat", r)
        seeds[f"repeat:{r}"] = draw_seed
        for detector in detectors:
            detector.clear_cache()
        benign = _draw(pool, samples, draw_seed)
        n_benign = len(benign)
        benign_scores = {d.name: d.scores(model, benign) for d in detectors}
        for detector in detectors:
            flags = detector.flags(model, benign, emp_target, scores=benign_scores[detector.name])
            fprs[detector.name].append(float(np.mean(flags)))

        for attack in attacks:
            attack_seed = derive_seed(seed, "attack", attack.kind, attack.epsilon, r)
            seeds[f"attack:{attack.kind}:{attack.epsilon:g}:{r}"] = attack_seed
            batch = build_attack(replace(attack, seed=attack_seed)).generate(
                model, benign.features, benign.labels
            )
            cell = (attack.kind, float(attack.epsilon))
            mask = batch.success_mask
            rates[cell].append(batch.success_rate)
            n_adv[cell].append(int(mask.sum()))
            if not mask.any():
                logger.warning(
                    "%s eps=%g repeat %d: no successful adversarial samples", attack.kind, attack.epsilon, r
                )
                continue
            adversarial = Dataset(
                features=batch.perturbed[mask],
                labels=batch.adversarial_labels[mask],
                indices=np.asarray(benign.indices)[mask],
            )
            for detector in detectors:
                key = (*cell, detector.name)
                adv_scores = detector.scores(model, adversarial)
                aucs[key].append(auc(benign_scores[detector.name], adv_scores, detector.direction))
                for target in targets:
                    flags = detector.flags(model, adversarial, target, scores=adv_scores)
                    tprs[key][target].append(float(np.mean(flags)))
            logger.info(
                "repeat %d %s eps=%g: %d/%d successful", r, attack.kind, attack.epsilon, mask.sum(), len(mask)
            )

    rows: list[EvalRow] = []
    for attack in attacks:
        cell = (attack.kind, float(attack.epsilon))
        for detector in detectors:
            key = (*cell, detector.name)
            values = aucs.get(key, [])
            rows.append(
                EvalRow(
                    attack=attack.kind,
                    epsilon=float(attack.epsilon),
                    detector=detector.name,
                    auc=float(np.mean(values)) if values else math.nan,
                    auc_std=float(np.std(values)) if values else math.nan,
                    tpr={
                        t: float(np.mean(tprs[key][t])) if tprs[key][t] else math.nan for t in targets
                    },
                    fpr_emp=float(np.mean(fprs[detector.name])),
                    n_benign=n_benign,
                    n_adv=int(round(np.mean(n_adv[cell]))),
                    success_rate=float(np.mean(rates[cell])),
                    flagged=len(values) < repeats,
                )
            )
    return EvalReport(
        rows=rows,
        config=config or {},
        seed=seed,
        repeats=repeats,
        seeds=seeds,
        success_rates={f"{kind}@{eps:g}": float(np.mean(v)) for (kind, eps), v in rates.items()},
    )


def fpr_curve(
    model: Classifier, calibrations: dict[float, "DetectorCalibration"], benign_test: Any
) -> list[dict[str, float]]:
    """
    Empirical test FPR of the combined detector and of each metric, per calibrated target.

    All calibrations share one probe, so the scores are computed once.
    """
    from ..detectors import sensitivity_batch

    if not calibrations:
        return []
    probe = next(iter(calibrations.values())).probe
    scores = sensitivity_batch(model, benign_test, probe)
    rows = []
    for target, calibration in sorted(calibrations.items()):
        row = {"target": float(target), "test_fpr": float(calibration.rejects(scores).mean())}
        for name, interval in calibration.intervals.items():
            row[f"test_fpr_{name}"] = float(interval.rejects(scores.metric(name)).mean())
        rows.append(row)
    return rows
