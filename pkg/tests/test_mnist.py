"""MNIST-scale checks: LeNet accuracy, IG completeness, detection AUC and calibration.

Needs the four IDX files (plain or gzipped) in NOISEPROBE_MNIST_DIR.
"""

import numpy as np
import pytest

from noiseprobe.attacks import AttackConfig, adaptive_combined, fgsm, pgd
from noiseprobe.attribution import completeness_gap, ig_numeric
from noiseprobe.data import Dataset, Splits, load_idx, split
from noiseprobe.detectors import build_detectors, fit_detectors
from noiseprobe.diffcore import forward
from noiseprobe.eval import auc, correctly_classified, fpr_curve, run_grid
from noiseprobe.models import ModelSpec, TrainConfig, accuracy, train

pytestmark = pytest.mark.slow

TARGETS = (0.01, 0.05, 0.10)
SENSITIVITY = {"sensitivity": {"probe": {"spread": 0.005, "seed": 2}}}


def idx_file(directory, stem):
    """Path to a plain or gzipped IDX file; skips the module when neither exists."""
    for name in (stem, f"{stem}.gz"):
        if (directory / name).exists():
            return directory / name
    pytest.skip(f"{stem} not found in {directory}")


def successful(batch, indices):
    """The successful adversarial samples of a batch as a Dataset."""
    mask = batch.success_mask
    return Dataset(
        features=batch.perturbed[mask],
        labels=batch.adversarial_labels[mask],
        indices=np.asarray(indices)[mask],
    )


@pytest.fixture(scope="module")
def mnist(mnist_dir):
    """Train and test sets from the IDX files."""
    train_set = load_idx(idx_file(mnist_dir, "train-images-idx3-ubyte"), idx_file(mnist_dir, "train-labels-idx1-ubyte"))
    test_set = load_idx(idx_file(mnist_dir, "t10k-images-idx3-ubyte"), idx_file(mnist_dir, "t10k-labels-idx1-ubyte"))
    return train_set, test_set


@pytest.fixture(scope="module")
def lenet(mnist):
    """LeNet-style network trained for three epochs."""
    train_set, test_set = mnist
    spec = ModelSpec(architecture="lenet", input_shape=(28, 28), class_count=10)
    config = TrainConfig(optimizer="adam", lr=0.001, epochs=3, batch_size=64, seed=0)
    return train(spec, train_set, test_set, config)


@pytest.fixture(scope="module")
def splits(mnist):
    """Test images split into calibration (3000), hold-out (2000) and evaluation (5000) pools."""
    train_set, test_set = mnist
    pools = split(test_set, [0.0, 0.3, 0.2, 0.5], seed=1)
    return Splits(train_set, pools.calibrate, pools.holdout, pools.test)


@pytest.fixture(scope="module")
def sensitivity_detector(lenet, splits):
    """Sensitivity detector calibrated at 1, 5 and 10%."""
    detectors = build_detectors(["sensitivity"], SENSITIVITY)
    fit_detectors(detectors, lenet, splits.calibrate, splits.holdout, TARGETS)
    return detectors[0]


def test_lenet_accuracy(lenet, mnist):
    """Test that the reference LeNet reaches 97% test accuracy."""
    _, test_set = mnist
    assert accuracy(lenet, test_set.features, test_set.labels) >= 0.97


def test_logits_are_finite(lenet, mnist):
    """Test one finite logit per digit class."""
    _, test_set = mnist
    logits = forward(lenet, test_set.features[0])
    assert logits.shape == (10,)
    assert np.all(np.isfinite(logits))


def test_ig_completeness(lenet, mnist):
    """Test the completeness gap on 100 test digits at m=256."""
    _, test_set = mnist
    for x in test_set.features[:100]:
        logits = forward(lenet, x)
        target = int(np.argmax(logits))
        attribution = ig_numeric(lenet, x, None, target, m=256)
        delta = abs(logits[target] - forward(lenet, np.zeros_like(x))[target])
        assert completeness_gap(lenet, attribution, x) <= max(1e-3, 1e-2 * delta)


def test_detection_auc(lenet, splits, sensitivity_detector):
    """Test detection AUC against FGSM 8/255, PGD 32/255 and PGD 0.15."""
    attacks = [
        AttackConfig(kind="fgsm", epsilon=8 / 255),
        AttackConfig(kind="pgd", epsilon=32 / 255),
        AttackConfig(kind="pgd", epsilon=0.15),
    ]
    report = run_grid(lenet, splits, [sensitivity_detector], attacks, repeats=1, seed=3, samples=500, fit=False)
    assert report.row("fgsm", 8 / 255, "sensitivity").auc >= 0.85
    assert report.row("pgd", 32 / 255, "sensitivity").auc >= 0.90
    assert report.row("pgd", 0.15, "sensitivity").auc >= 0.90


def test_pgd_step_count_barely_matters(lenet, splits, sensitivity_detector):
    """Test that PGD at 40 and at 100 steps gives AUCs within 0.03 of each other."""
    aucs = []
    for steps in (40, 100):
        attack = AttackConfig(kind="pgd", epsilon=32 / 255, steps=steps)
        report = run_grid(lenet, splits, [sensitivity_detector], [attack], repeats=1, seed=4, samples=300, fit=False)
        aucs.append(report.row("pgd", 32 / 255, "sensitivity").auc)
    assert abs(aucs[0] - aucs[1]) <= 0.03


def test_baseline_detectors(lenet, splits):
    """Test FS against FGSM 8/255, TWS against FGSM 32/255 and U-LOO against PGD 8/255."""
    settings = {"tws": {"probe": {"spread": 0.005, "seed": 2}}, "uloo": {"ig_steps": 32}}
    detectors = build_detectors(["fs", "tws", "uloo"], settings)
    attacks = [
        AttackConfig(kind="fgsm", epsilon=8 / 255),
        AttackConfig(kind="fgsm", epsilon=32 / 255),
        AttackConfig(kind="pgd", epsilon=8 / 255),
    ]
    report = run_grid(
        lenet,
        splits,
        detectors,
        attacks,
        repeats=1,
        seed=5,
        samples=300,
        fpr_targets=TARGETS,
        validation_attack=AttackConfig(kind="fgsm", epsilon=8 / 255),
    )
    assert report.row("fgsm", 8 / 255, "fs").auc >= 0.80
    assert report.row("fgsm", 32 / 255, "tws").auc >= 0.70
    assert report.row("pgd", 8 / 255, "uloo").auc >= 0.80


def test_fresh_benign_fpr_per_metric(lenet, splits, sensitivity_detector):
    """Test each metric's FPR on unseen benign digits within 2 points of every target."""
    fresh = correctly_classified(lenet, splits.test)
    rows = fpr_curve(lenet, sensitivity_detector.full_calibrations, fresh)
    assert [row["target"] for row in rows] == pytest.approx(list(TARGETS))
    for row in rows:
        for name in ("ps", "as"):
            assert abs(row[f"test_fpr_{name}"] - row["target"]) <= 0.02


def test_either_metric_rejection_covers_both(lenet, splits, sensitivity_detector):
    """Test that the OR rule catches at least as many adversarial digits as either metric alone."""
    benign = correctly_classified(lenet, splits.test).subset(np.arange(300))
    adversarial = successful(fgsm(lenet, benign.features, benign.labels, 8 / 255), benign.indices)
    assert len(adversarial) > 0
    scores = sensitivity_detector.pair_scores(lenet, adversarial)
    for calibration in sensitivity_detector.full_calibrations.values():
        combined = calibration.rejects(scores).mean()
        for name, interval in calibration.intervals.items():
            assert combined >= interval.rejects(scores.metric(name)).mean()


def test_combined_adaptive_attack_lowers_auc(lenet, splits, sensitivity_detector):
    """Test that the logit-and-attribution attack costs at least 0.10 AUC and 10x the time of PGD."""
    benign = correctly_classified(lenet, splits.test).subset(np.arange(100))
    epsilon = 32 / 255
    plain = pgd(lenet, benign.features, benign.labels, epsilon, seed=6)
    adaptive = adaptive_combined(lenet, benign.features, benign.labels, epsilon, c=10.0, steps=100, seed=6)
    benign_scores = sensitivity_detector.scores(lenet, benign)
    aucs = {}
    for name, batch in (("pgd", plain), ("adaptive", adaptive)):
        adversarial = successful(batch, benign.indices)
        assert len(adversarial) > 0
        aucs[name] = auc(benign_scores, sensitivity_detector.scores(lenet, adversarial))
    assert aucs["pgd"] - aucs["adaptive"] >= 0.10
    assert adaptive.wall_time >= 10 * plain.wall_time
