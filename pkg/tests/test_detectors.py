"""Tests for the noise-probe sensitivity detector and the baselines."""

import gc
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest
from scipy.stats import spearmanr

from noiseprobe.attacks import fgsm
from noiseprobe.data import Dataset
from noiseprobe.detectors import (
    DETECTOR_CLASSES,
    FeatureSqueezingDetector,
    NoiseProbe,
    SensitivityDetector,
    build_detectors,
    calibrate,
    default_bits,
    detect,
    detect_batch,
    fit_detectors,
    flip_rate,
    fs_scores,
    load_calibrations,
    pair_from_noisy,
    save_calibrations,
    sensitivity,
    sensitivity_batch,
    spread_grid,
    sweep_spread,
    tws_score,
    uloo_scores,
)
from noiseprobe.detectors.base import ScoreCache
from noiseprobe.detectors.baselines import bit_depth, median_smooth
from noiseprobe.diffcore import Graph, forward
from noiseprobe.errors import ConfigError, DegenerateScoresError, InsufficientSamplesError, ShapeError
from noiseprobe.eval.grid import correctly_classified, fpr_curve

PROBE = NoiseProbe(spread=0.05, seed=3, ig_steps=16)


@pytest.fixture(scope="module")
def calibrations(blob_model, blob_splits):
    """Calibrations at 1, 5 and 10% on the blob model."""
    return calibrate(
        blob_model,
        blob_splits.calibrate,
        blob_splits.holdout,
        PROBE,
        (0.01, 0.05, 0.10),
        min_samples=200,
    )


@pytest.fixture(scope="module")
def adversarial(blob_model, blob_splits):
    """Successful FGSM samples from the test partition, keeping original indices."""
    test = blob_splits.test
    batch = fgsm(blob_model, test.features, test.labels, 0.3)
    mask = batch.success_mask
    return Dataset(
        features=batch.perturbed[mask],
        labels=batch.adversarial_labels[mask],
        indices=np.asarray(test.indices)[mask],
    )


class TestNoiseProbe:
    """Tests for the seeded noise source."""

    def test_sigma_scales_with_range(self):
        """Test sigma = (max - min) * spread."""
        probe = NoiseProbe(spread=0.1)
        assert probe.sigma(np.array([0.2, 0.7, 1.2])) == pytest.approx(0.1)

    def test_noise_is_keyed_by_index_and_draw(self):
        """Test that (seed, index, draw) fully determines the noise."""
        x = np.linspace(0, 1, 10)
        np.testing.assert_array_equal(PROBE.noise(x, 4), PROBE.noise(x, 4))
        assert not np.array_equal(PROBE.noise(x, 4), PROBE.noise(x, 5))
        assert not np.array_equal(PROBE.noise(x, 4, 0), PROBE.noise(x, 4, 1))

    def test_zero_noise(self):
        """Test that the zero-noise switch returns zeros."""
        x = np.linspace(0, 1, 10)
        np.testing.assert_array_equal(NoiseProbe(spread=0.1, zero_noise=True).noise(x, 0), np.zeros(10))

    @pytest.mark.parametrize("field,value", [("spread", 0.0), ("draws", 0), ("ig_steps", 0)])
    def test_validation(self, field, value):
        """Test that invalid probe settings are rejected."""
        settings = {"spread": 0.1, field: value}
        with pytest.raises(ConfigError):
            NoiseProbe.from_dict(settings).validate()


class TestSensitivity:
    """Tests for PS and AS."""

    def test_linear_model(self, linear_graph):
        """Test PS = |W n|_1 and AS = |n * w_t|_1 for an affine model."""
        x = np.array([0.1, 0.9, 0.4, 0.6])
        noise = PROBE.noise(x, 7)
        w = linear_graph.parameters["logits.weight"]
        target = int(np.argmax(forward(linear_graph, x)))
        pair = sensitivity(linear_graph, x, PROBE, index=7)
        assert pair.ps == pytest.approx(np.abs(w @ noise).sum())
        assert pair.as_ == pytest.approx(np.abs(noise * w[target]).sum())

    def test_constant_input_is_degenerate(self, mlp_graph):
        """Test that zero-range inputs give (0, 0) flagged as degenerate."""
        pair = sensitivity(mlp_graph, np.full(6, 0.3), PROBE)
        assert (pair.ps, pair.as_, pair.degenerate) == (0.0, 0.0, True)

    def test_zero_noise_gives_zero(self, mlp_graph):
        """Test that without noise both statistics vanish."""
        x = np.linspace(0, 1, 6)
        pair = sensitivity(mlp_graph, x, NoiseProbe(spread=0.1, zero_noise=True))
        assert (pair.ps, pair.as_) == (0.0, 0.0)

    def test_batch_matches_single(self, mlp_graph):
        """Test that batching keeps each sample's own noise."""
        xs = np.random.default_rng(0).uniform(size=(4, 6))
        scores = sensitivity_batch(mlp_graph, xs, PROBE, indices=[10, 11, 12, 13])
        single = sensitivity(mlp_graph, xs[2], PROBE, index=12)
        assert scores.ps[2] == pytest.approx(single.ps)
        assert scores.as_[2] == pytest.approx(single.as_)

    def test_draws_are_averaged(self, mlp_graph):
        """Test that several draws average the per-draw statistics."""
        x = np.random.default_rng(1).uniform(size=6)
        probe = NoiseProbe(spread=0.05, seed=2, draws=2, ig_steps=16)
        averaged = sensitivity(mlp_graph, x, probe, index=3)
        draws = [pair_from_noisy(mlp_graph, x, x + probe.noise(x, 3, d), 16) for d in range(2)]
        assert averaged.ps == pytest.approx(np.mean([p.ps for p in draws]))
        assert averaged.as_ == pytest.approx(np.mean([p.as_ for p in draws]))

    def test_attribution_change_tracks_logit_change(self, blob_model, blob_splits):
        """Test that AS and PS rank 500 noise draws alike on a trained MLP."""
        x = blob_splits.test.features[0]
        rng = np.random.default_rng(3)
        directions = rng.normal(size=(500, x.size))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        noise = directions * np.geomspace(0.005, 0.2, 500)[:, None]
        pairs = [pair_from_noisy(blob_model, x, x + n, 32) for n in noise]
        rho, _ = spearmanr([p.ps for p in pairs], [p.as_ for p in pairs])
        assert rho > 0.9


class TestCalibration:
    """Tests for acceptance-interval calibration."""

    def test_holdout_fpr_within_target(self, calibrations):
        """Test per-metric hold-out FPR at most the target and the union at most their sum."""
        for target, calibration in calibrations.items():
            for name in ("ps", "as"):
                assert calibration.holdout_fpr[name] <= target + 1e-12
            assert calibration.combined_holdout_fpr <= 2 * target + 1e-12
            assert calibration.combined_holdout_fpr >= max(calibration.holdout_fpr.values()) - 1e-12

    def test_lower_target_is_more_permissive(self, calibrations):
        """Test that intervals are nested across targets."""
        for name in ("ps", "as"):
            assert calibrations[0.01].intervals[name].covers(calibrations[0.10].intervals[name])

    def test_or_rule_rejects_union(self, blob_model, blob_splits, calibrations):
        """Test that the combined detector flags every sample either metric flags."""
        scores = sensitivity_batch(blob_model, blob_splits.test, PROBE)
        calibration = calibrations[0.05]
        combined = calibration.rejects(scores)
        for name in ("ps", "as"):
            assert np.all(combined >= calibration.restricted([name]).rejects(scores))

    def test_insufficient_pool(self, blob_model, blob_splits):
        """Test that a reference pool below the minimum raises."""
        with pytest.raises(InsufficientSamplesError):
            calibrate(blob_model, blob_splits.calibrate, blob_splits.holdout, PROBE, min_samples=10_000)

    def test_degenerate_scores(self, blob_model, blob_splits):
        """Test that a constant statistic raises DegenerateScoresError."""
        probe = NoiseProbe(spread=0.05, zero_noise=True, ig_steps=4)
        with pytest.raises(DegenerateScoresError):
            calibrate(blob_model, blob_splits.calibrate, blob_splits.holdout, probe, min_samples=10)

    def test_explicit_sides(self, blob_model, blob_splits):
        """Test that configured sides override the default."""
        result = calibrate(
            blob_model,
            blob_splits.calibrate,
            blob_splits.holdout,
            NoiseProbe(spread=0.05, seed=3, ig_steps=4),
            (0.05,),
            sides={"ps": "two-sided", "as": "below"},
            min_samples=10,
        )
        assert result[0.05].intervals["ps"].side == "two-sided"
        assert result[0.05].intervals["as"].side == "below"

    def test_validation_picks_sides(self, blob_model, blob_splits, adversarial):
        """Test that a validation pair records an AUC per metric."""
        result = calibrate(
            blob_model,
            blob_splits.calibrate,
            blob_splits.holdout,
            NoiseProbe(spread=0.05, seed=3, ig_steps=4),
            (0.05,),
            validation=(blob_splits.holdout, adversarial),
            min_samples=10,
        )
        assert set(result[0.05].validation_auc) == {"ps", "as"}
        assert all(v >= 0.5 for v in result[0.05].validation_auc.values())

    def test_save_load_round_trip(self, blob_model, blob_splits, calibrations):
        """Test that a reloaded calibration makes the same decisions."""
        with TemporaryDirectory() as tmpdir:
            path = save_calibrations(calibrations, Path(tmpdir) / "calibration.json", {"seed": 1})
            restored = load_calibrations(path)
        assert sorted(restored) == sorted(calibrations)
        flags, _ = detect_batch(blob_model, blob_splits.test, calibrations[0.05])
        again, _ = detect_batch(blob_model, blob_splits.test, restored[0.05])
        np.testing.assert_array_equal(flags, again)

    def test_load_missing_and_malformed(self):
        """Test the calibration file errors."""
        with TemporaryDirectory() as tmpdir:
            with pytest.raises(FileNotFoundError):
                load_calibrations(Path(tmpdir) / "missing.json")
            bad = Path(tmpdir) / "bad.json"
            bad.write_text('{"calibrations": [{"fpr_target": 0.05}]}')
            with pytest.raises(ValueError):
                load_calibrations(bad)


class TestDetection:
    """Tests for verdicts."""

    def test_fresh_benign_fpr_close_to_target(self, blob_model, blob_splits, calibrations):
        """Test each metric's fresh benign FPR against its target and the union against their sum."""
        fresh = correctly_classified(blob_model, blob_splits.test)
        for row in fpr_curve(blob_model, calibrations, fresh):
            for name in ("ps", "as"):
                assert abs(row[f"test_fpr_{name}"] - row["target"]) <= 0.08
            assert row["test_fpr"] <= row["test_fpr_ps"] + row["test_fpr_as"] + 1e-12
        flags, _ = detect_batch(blob_model, fresh, calibrations[0.10])
        assert flags.mean() <= 2 * 0.10 + 0.08

    def test_single_verdict(self, blob_model, blob_splits, calibrations):
        """Test the single-sample verdict and its scores."""
        verdict, pair = detect(blob_model, blob_splits.test.features[0], calibrations[0.05], index=0)
        assert verdict in ("benign", "adversarial")
        assert pair.ps >= 0 and pair.as_ >= 0

    def test_flip_rate(self, blob_model, blob_splits, calibrations):
        """Test that re-seeding the probe changes few decisions and the same seed none."""
        subset = blob_splits.test.subset(np.arange(60))
        same = flip_rate(blob_model, subset, calibrations[0.05], PROBE.seed)
        other = flip_rate(blob_model, subset, calibrations[0.05], PROBE.seed + 1)
        assert same == 0.0
        assert 0.0 <= other <= 1.0


class TestSpreadSweep:
    """Tests for the spread grid and sweep."""

    def test_grid(self):
        """Test the incremental grid."""
        np.testing.assert_allclose(spread_grid(), np.arange(1, 11) * 0.001)

    def test_invalid_grid(self):
        """Test that an empty grid is rejected."""
        with pytest.raises(ConfigError):
            spread_grid(count=0)

    def test_sweep_returns_best_spread(self, blob_model, blob_splits, adversarial):
        """Test that the best spread is on the grid and maximizes the curve."""
        result = sweep_spread(blob_model, blob_splits.holdout, adversarial, [0.01, 0.05, 0.1], seed=1, ig_steps=4)
        assert result.best_spread in (0.01, 0.05, 0.1)
        assert len(result.curve) == 3
        assert max(p.auc for p in result.curve) == next(p.auc for p in result.curve if p.spread == result.best_spread)
        assert set(result.to_rows()[0]) == {"spread", "auc", "auc_ps", "auc_as"}


class TestBaselines:
    """Tests for the reference detectors."""

    def test_bit_depth(self):
        """Test rounding to one bit."""
        np.testing.assert_array_equal(bit_depth(np.array([0.2, 0.5, 0.8]), 1), [0.0, 0.0, 1.0])

    def test_median_smooth_removes_speck(self):
        """Test that an isolated pixel disappears under a 3x3 median."""
        image = np.zeros((1, 5, 5))
        image[0, 2, 2] = 1.0
        assert median_smooth(image, 3, 2).max() == 0.0

    def test_tws_is_non_negative(self, blob_model, blob_splits):
        """Test the softmax L1 change."""
        assert tws_score(blob_model, blob_splits.test.features[0], PROBE) >= 0.0

    def test_uloo_scores(self, blob_model, blob_splits):
        """Test one IQR per sample for both attribution methods."""
        xs = blob_splits.test.features[:5]
        assert uloo_scores(blob_model, xs, 8).shape == (5,)
        assert np.all(uloo_scores(blob_model, xs, attribution="loo") >= 0)

    def test_feature_squeezing_needs_images(self, blob_model, blob_splits):
        """Test that flat inputs are refused."""
        with pytest.raises(ShapeError):
            fs_scores(blob_model, blob_splits.test.features[:3])

    def test_feature_squeezing_on_images(self, digit_model, digits):
        """Test scores on image inputs."""
        scores = fs_scores(digit_model, digits.features[:10], bits=1, median_size=2)
        assert scores.shape == (10,)
        assert np.all((scores >= 0) & (scores <= 2))

    def test_tws_without_noise_is_zero(self, blob_model, blob_splits):
        """Test that a probe adding no noise leaves the softmax unchanged."""
        quiet = NoiseProbe(spread=0.05, zero_noise=True)
        assert tws_score(blob_model, blob_splits.test.features[0], quiet) == 0.0
        assert tws_score(blob_model, np.full(4, 0.3), PROBE) == 0.0

    def test_eight_bit_squeeze_is_identity(self, digit_model):
        """Test that 8-bit rounding of 8-bit images changes nothing, constant images included."""
        rng = np.random.default_rng(6)
        images = rng.integers(0, 256, size=(6, 8, 8)) / 255.0
        np.testing.assert_array_equal(bit_depth(images, 8), images)
        np.testing.assert_array_equal(fs_scores(digit_model, images, bits=8, median_size=None), 0.0)
        constant = np.full((2, 8, 8), 128 / 255.0)
        np.testing.assert_array_equal(fs_scores(digit_model, constant, bits=8, median_size=2), 0.0)

    def test_default_bit_depth_follows_channels(self):
        """Test 1 bit for grayscale inputs and 5 for colour inputs."""
        assert default_bits((28, 28)) == 1
        assert default_bits((1, 28, 28)) == 1
        assert default_bits((3, 32, 32)) == 5
        detector = FeatureSqueezingDetector({})
        assert detector.bits == "auto"
        assert detector.validate_config()
        with pytest.raises(ConfigError):
            FeatureSqueezingDetector({"bits": "many"}).validate_config()


class TestDetectorPlugins:
    """Tests for the detector registry."""

    def test_unknown_detector(self):
        """Test that unknown names list the valid ones."""
        with pytest.raises(ConfigError, match="sensitivity"):
            build_detectors(["magnet"], {})

    def test_registry_names(self):
        """Test that every registered detector reports its registry name."""
        for name, factory in DETECTOR_CLASSES.items():
            assert factory({}).name == name

    def test_fit_shares_sensitivity_calibration(self, blob_model, blob_splits):
        """Test that the ablation variants reuse one calibration."""
        settings = {"sensitivity": {"probe": {"spread": 0.05, "ig_steps": 4}, "min_samples": 10}}
        detectors = build_detectors(["sensitivity", "sensitivity_ps", "sensitivity_as", "tws"], settings)
        fit_detectors(detectors, blob_model, blob_splits.calibrate, blob_splits.holdout, (0.05,))
        full, ps_only, as_only, tws = detectors
        assert isinstance(full, SensitivityDetector)
        assert ps_only.calibrations[0.05].metrics == ("ps",)
        assert as_only.calibrations[0.05].metrics == ("as",)
        assert tws.side == "below"
        scores = full.scores(blob_model, blob_splits.test)
        assert np.all((scores >= 0) & (scores <= 1))
        combined = full.flags(blob_model, blob_splits.test, 0.05)
        assert np.all(combined >= ps_only.flags(blob_model, blob_splits.test, 0.05))

    def test_invalid_squeezer(self):
        """Test squeezer validation."""
        with pytest.raises(ConfigError):
            FeatureSqueezingDetector({"bits": 0}).validate_config()


class TestScoreCache:
    """Tests for the memoised PS/AS scores."""

    def test_repeat_batch_is_a_hit(self, blob_model, blob_splits):
        """Test that scoring the same batch twice reuses the first result."""
        detector = SensitivityDetector({"probe": {"spread": 0.05, "ig_steps": 4}})
        batch = blob_splits.test.subset(np.arange(10))
        first = detector.pair_scores(blob_model, batch)
        assert detector.pair_scores(blob_model, batch) is first

    def test_size_is_bounded(self, blob_model, blob_splits):
        """Test that old batches are evicted once the cache is full."""
        detector = SensitivityDetector({"probe": {"spread": 0.05, "ig_steps": 4}, "cache_size": 2})
        for start in range(0, 40, 10):
            detector.pair_scores(blob_model, blob_splits.test.subset(np.arange(start, start + 10)))
        assert len(detector._cache) == 2
        detector.clear_cache()
        assert len(detector._cache) == 0

    def test_keys_include_indices_and_probe(self, blob_splits):
        """Test that the same features under other indices or another probe get another key."""
        features = blob_splits.test.features[:5]
        ids = np.arange(5)
        key = ScoreCache.fingerprint(features, ids, PROBE)
        assert len(key) == 32
        assert key == ScoreCache.fingerprint(features.copy(), ids.copy(), PROBE)
        assert key != ScoreCache.fingerprint(features, ids + 1, PROBE)
        assert key != ScoreCache.fingerprint(features, ids, NoiseProbe(spread=0.1, seed=3, ig_steps=16))

    def test_other_model_misses(self, linear_graph, smooth_graph):
        """Test that an entry stored for one model is never served for another."""
        cache = ScoreCache()
        cache.put(linear_graph, b"batch", "scores")
        assert cache.get(linear_graph, b"batch") == "scores"
        assert cache.get(smooth_graph, b"batch") is None

    def test_collected_model_is_dropped(self, linear_graph):
        """Test that a stored entry whose model was garbage collected never hits."""
        cache = ScoreCache()
        graph = Graph(linear_graph.input_shape, linear_graph.layers, dict(linear_graph.parameters))
        cache.put(graph, b"batch", "scores")
        key = next(iter(cache._entries))
        ref, _ = cache._entries[key]
        del graph
        gc.collect()
        assert ref() is None
        # a new model at the recycled address must not see the stale entry
        assert cache.get(linear_graph, b"batch") is None
