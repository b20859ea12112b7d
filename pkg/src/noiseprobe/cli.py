"""Command-line interface for the noise-probe detection pipeline."""

import json
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import click
import numpy as np
import yaml

from .attacks import ATTACK_KINDS, AdversarialBatch, AttackConfig, build_attack
from .data import DATASET_SOURCES, PARTITIONS, Dataset, Splits, split
from .detectors import (
    DEFAULT_FPR_TARGETS,
    DETECTOR_CLASSES,
    NoiseProbe,
    SensitivityDetector,
    build_detectors,
    calibrate,
    detect_batch,
    fit_detectors,
    load_calibrations,
    save_calibrations,
    spread_grid,
    sweep_spread,
)
from .errors import (
    ConfigError,
    DegenerateScoresError,
    DivergenceError,
    FormatError,
    InsufficientSamplesError,
)
from .eval import correctly_classified, fpr_curve, run_grid, validation_pair
from .models import ModelSpec, TrainConfig, TrainedModel, accuracy, load_file, save_file, train
from .report import ReportGenerator
from .utils import config_hash, derive_seed

logger = logging.getLogger(__name__)

EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_ARTIFACT = 4
EXIT_SAMPLES = 5

DEFAULT_SPLIT = [0.6, 0.15, 0.1, 0.15]

MODEL_FILE = "model.npm"
TRAIN_METRICS_FILE = "train_metrics.json"
ATTACK_SUMMARY_FILE = "attack_summary.json"
CALIBRATION_FILE = "calibration.json"


def load_config(config_path: Path) -> dict[str, Any]:
    """Load configuration from a YAML (or JSON) file."""
    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_path) as f:
        return yaml.safe_load(f) or {}


@dataclass
class RunConfig:
    """Validated run configuration shared by every subcommand."""

    seed: int
    out: Path
    dataset: dict[str, Any]
    split: list[float] = field(default_factory=lambda: list(DEFAULT_SPLIT))
    model: dict[str, Any] = field(default_factory=dict)
    model_path: Path | None = None
    training: dict[str, Any] = field(default_factory=dict)
    attacks: list[AttackConfig] = field(default_factory=list)
    detectors: list[str] = field(default_factory=lambda: ["sensitivity"])
    detector_settings: dict[str, Any] = field(default_factory=dict)
    fpr_targets: list[float] = field(default_factory=lambda: list(DEFAULT_FPR_TARGETS))
    validation_attack: AttackConfig | None = None
    sweep: dict[str, Any] = field(default_factory=dict)
    repeats: int = 10
    samples: int = 1000
    document: dict[str, Any] = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.document)

    @property
    def model_file(self) -> Path:
        return self.model_path or self.out / MODEL_FILE

    @classmethod
    def from_document(
        cls, document: dict[str, Any], seed: int | None = None, out: Path | None = None
    ) -> "RunConfig":
        """
        Build the run configuration, applying command-line overrides.

        Raises:
            ConfigError: If the seed is missing or a section is malformed
        """
        document = dict(document)
        if seed is not None:
            document["seed"] = seed
        if out is not None:
            document["out"] = str(out)
        if document.get("seed") is None:
            raise ConfigError("seed is required (set it in the config or pass --seed)")
        dataset = document.get("dataset")
        if not isinstance(dataset, dict) or "kind" not in dataset:
            raise ConfigError("dataset.kind is required")

        calibration = document.get("calibration") or {}
        validation = calibration.get("validation_attack")
        evaluate = document.get("evaluate") or {}
        model_path = document.get("model_path")
        return cls(
            seed=int(document["seed"]),
            out=Path(document.get("out", "runs")),
            dataset=dict(dataset),
            split=[float(f) for f in document.get("split", DEFAULT_SPLIT)],
            model=dict(document.get("model") or {}),
            model_path=Path(model_path) if model_path else None,
            training=dict(document.get("training") or {}),
            attacks=parse_attacks(document.get("attacks") or []),
            detectors=list(document.get("detectors") or ["sensitivity"]),
            detector_settings={
                name: document[name]
                for name in DETECTOR_CLASSES
                if isinstance(document.get(name), dict)
            },
            fpr_targets=[float(t) for t in calibration.get("fpr_targets", DEFAULT_FPR_TARGETS)],
            validation_attack=AttackConfig.from_dict(validation) if validation else None,
            sweep=dict(document.get("sweep") or {}),
            repeats=int(evaluate.get("repeats", 10)),
            samples=int(evaluate.get("samples", 1000)),
            document=document,
        )

    def provenance(self) -> dict[str, Any]:
        return {"config_hash": self.hash, "seed": self.seed}


def parse_attacks(entries: list[dict[str, Any]]) -> list[AttackConfig]:
    """One AttackConfig per entry; an ``epsilons`` list expands into one config per value."""
    configs = []
    for entry in entries:
        entry = dict(entry)
        epsilons = entry.pop("epsilons", None)
        if epsilons is None:
            configs.append(AttackConfig.from_dict(entry))
        else:
            configs += [AttackConfig.from_dict({**entry, "epsilon": float(e)}) for e in epsilons]
    for config in configs:
        config.validate()
    return configs


# ===== PIPELINE HELPERS =====


def fail(message: str, code: int) -> None:
    click.echo(f"✗ {message}", err=True)
    sys.exit(code)


@contextmanager
def exit_codes() -> Iterator[None]:
    """Map library exceptions to the documented exit codes."""
    try:
        yield
    except ConfigError as e:
        fail(f"Configuration error: {e}", EXIT_CONFIG)
    except DivergenceError as e:
        fail(f"Training diverged: {e}", EXIT_DIVERGENCE)
    except (FileNotFoundError, FormatError) as e:
        fail(f"Could not load artifact: {e}", EXIT_ARTIFACT)
    except (InsufficientSamplesError, DegenerateScoresError) as e:
        fail(f"Insufficient samples: {e}", EXIT_SAMPLES)
    except Exception as e:
        logger.debug("unhandled error", exc_info=True)
        fail(f"Error: {e}", EXIT_OTHER)


def load_run_config(config_path: Path, seed: int | None, out: Path | None) -> RunConfig:
    try:
        document = load_config(config_path)
    except FileNotFoundError as e:
        raise ConfigError(str(e)) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{config_path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{config_path}: expected a key/value document")
    cfg = RunConfig.from_document(document, seed, out)
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg


def load_dataset(cfg: RunConfig) -> Splits:
    """Build the dataset source named by ``dataset.kind`` and split it."""
    section = dict(cfg.dataset)
    kind = section.pop("kind")
    source_class = DATASET_SOURCES.get(kind)
    if source_class is None:
        raise ConfigError(
            f"unknown dataset kind {kind!r}; valid: {', '.join(DATASET_SOURCES)}"
        )
    split_seed = derive_seed(cfg.seed, "split")
    if kind == "tabular":
        section.setdefault("split", cfg.split)
        section.setdefault("seed", split_seed)
    else:
        section.setdefault("seed", derive_seed(cfg.seed, "dataset"))
    source = source_class(section)
    source.validate_config()
    dataset = source.load()
    click.echo(f"✓ Loaded {len(dataset)} samples from {source.name} ({dataset.provenance})")
    return split(dataset, cfg.split, split_seed)


def load_model(cfg: RunConfig) -> TrainedModel:
    model = load_file(cfg.model_file)
    click.echo(f"✓ Loaded model {cfg.model_file} ({model.spec.architecture})")
    return model


def pick_partition(splits: Splits, name: str) -> Dataset:
    return dict(zip(PARTITIONS, splits, strict=True))[name]


def write_json(path: Path, document: dict[str, Any]) -> Path:
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def sensitivity_probe(cfg: RunConfig, spread: float | None = None) -> NoiseProbe:
    probe_config = dict((cfg.detector_settings.get("sensitivity") or {}).get("probe") or {})
    probe_config.setdefault("spread", 0.005)
    probe_config.setdefault("seed", derive_seed(cfg.seed, "probe"))
    if spread is not None:
        probe_config["spread"] = spread
    probe = NoiseProbe.from_dict(probe_config)
    probe.validate()
    return probe


def run_sweep(cfg: RunConfig, model: TrainedModel, splits: Splits, report: ReportGenerator) -> float:
    """Validation-AUC spread sweep on the hold-out partition; returns the best spread."""
    if cfg.validation_attack is None:
        raise ConfigError("calibration.validation_attack is required for a spread sweep")
    pair = validation_pair(model, splits.holdout, cfg.validation_attack, cfg.seed, cfg.samples)
    if pair is None:
        raise InsufficientSamplesError("validation attack produced no successful samples")
    spreads = cfg.sweep.get("spreads") or spread_grid(
        float(cfg.sweep.get("start", 0.001)),
        float(cfg.sweep.get("delta", 0.001)),
        int(cfg.sweep.get("count", 10)),
    )
    probe = sensitivity_probe(cfg)
    result = sweep_spread(model, *pair, spreads, seed=probe.seed, ig_steps=probe.ig_steps)
    path = report.write_sweep(result.to_rows())
    click.echo(f"✓ Spread sweep written to {path}; best spread {result.best_spread:g}")
    return result.best_spread


# ===== COMMANDS =====


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log progress at debug level")
def main(verbose: bool):
    """Noise-probe adversarial input detection."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def common_options(func):
    func = click.option(
        "--out", "-o", type=click.Path(path_type=Path), help="Output directory for artifacts"
    )(func)
    func = click.option("--seed", type=int, help="Global seed (overrides the config)")(func)
    func = click.option(
        "--config",
        "-c",
        type=click.Path(path_type=Path),
        default="config.yaml",
        help="Path to the run configuration",
    )(func)
    return func


@main.command("train")
@common_options
def cmd_train(config: Path, seed: int | None, out: Path | None):
    """Train the classifier and write the weight file plus a metrics record."""
    with exit_codes():
        cfg = load_run_config(config, seed, out)
        splits = load_dataset(cfg)
        spec_data = dict(cfg.model)
        spec_data.setdefault("input_shape", list(splits.train.feature_shape))
        spec_data.setdefault("class_count", max(d.class_count for d in splits))
        spec = ModelSpec.from_dict(spec_data)
        spec.validate()
        train_config = TrainConfig.from_dict(
            {"seed": derive_seed(cfg.seed, "train") % 2**32, **cfg.training}
        )

        click.echo(f"Training {spec.architecture} on {len(splits.train)} samples...")
        model = train(spec, splits.train, splits.test, train_config)
        model.record.config_hash = cfg.hash
        model_path = save_file(model, cfg.model_file)
        metrics = {
            **cfg.provenance(),
            "train_accuracy": accuracy(model.graph, splits.train.features, splits.train.labels),
            "test_accuracy": model.record.test_accuracy,
            "epochs": model.record.epochs,
            "loss_history": model.record.loss_history,
        }
        write_json(cfg.out / TRAIN_METRICS_FILE, metrics)
        click.echo(f"✓ Model written to {model_path} (test accuracy {metrics['test_accuracy']:.4f})")


@main.command("attack")
@common_options
@click.option("--kind", "-k", help=f"Only run attacks of this kind ({', '.join(ATTACK_KINDS)})")
def cmd_attack(config: Path, seed: int | None, out: Path | None, kind: str | None):
    """Craft adversarial batches from the test partition for every configured attack."""
    with exit_codes():
        cfg = load_run_config(config, seed, out)
        if kind is not None and kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {kind!r}; valid kinds: {', '.join(ATTACK_KINDS)}")
        attacks = [a for a in cfg.attacks if kind is None or a.kind == kind]
        if not attacks:
            raise ConfigError("no attacks configured")
        model = load_model(cfg)
        splits = load_dataset(cfg)
        clean = splits.test.subset(np.arange(min(cfg.samples, len(splits.test))))

        summaries = []
        for attack in attacks:
            attack_seed = derive_seed(cfg.seed, "attack", attack.kind, attack.epsilon)
            attack.seed = attack_seed
            batch = build_attack(attack).generate(model, clean.features, clean.labels)
            batch.extra.update(cfg.provenance())
            path = batch.save(cfg.out / f"adversarial_{attack.kind}_{attack.epsilon:g}.npz")
            summary = batch.summary() | {"file": path.name}
            summaries.append(summary)
            click.echo(
                f"✓ {attack.kind} eps={attack.epsilon:g}: success {summary['success_rate']:.2%}, "
                f"mean L2 {summary['mean_l2']:.4f}, {summary['wall_time_per_sample']:.4f}s/sample"
            )
        write_json(cfg.out / ATTACK_SUMMARY_FILE, {**cfg.provenance(), "attacks": summaries})


@main.command("calibrate")
@common_options
@click.option("--sweep/--no-sweep", default=False, help="Pick the spread by validation AUC first")
def cmd_calibrate(config: Path, seed: int | None, out: Path | None, sweep: bool):
    """Calibrate the sensitivity detector's acceptance intervals."""
    with exit_codes():
        cfg = load_run_config(config, seed, out)
        model = load_model(cfg)
        splits = load_dataset(cfg)
        report = ReportGenerator(cfg.out, cfg.document, cfg.seed)

        best = run_sweep(cfg, model, splits, report) if sweep else None
        probe = sensitivity_probe(cfg, best)
        validation = None
        if cfg.validation_attack is not None:
            validation = validation_pair(model, splits.holdout, cfg.validation_attack, cfg.seed, cfg.samples)
        settings = cfg.detector_settings.get("sensitivity") or {}
        calibrations = calibrate(
            model,
            splits.calibrate,
            splits.holdout,
            probe,
            cfg.fpr_targets,
            validation=validation,
            sides=settings.get("sides"),
            min_samples=int(settings.get("min_samples", 500)),
            fingerprint=splits.calibrate.fingerprint(),
        )
        path = save_calibrations(calibrations, cfg.out / CALIBRATION_FILE, cfg.provenance())
        for target, calibration in sorted(calibrations.items()):
            click.echo(
                f"  ℹ target {target:.2f}: hold-out fpr ps {calibration.holdout_fpr['ps']:.4f}, "
                f"as {calibration.holdout_fpr['as']:.4f}, combined {calibration.combined_holdout_fpr:.4f}"
            )
        click.echo(f"✓ Calibration written to {path}")


@main.command("detect")
@common_options
@click.option("--fpr", type=float, default=0.05, show_default=True, help="Calibrated FPR target")
@click.option(
    "--input",
    "input_path",
    type=click.Path(path_type=Path),
    help="Adversarial batch (.npz) to screen instead of a dataset partition",
)
@click.option(
    "--partition",
    type=click.Choice(PARTITIONS),
    default="test",
    show_default=True,
    help="Dataset partition to screen when --input is not given",
)
def cmd_detect(
    config: Path,
    seed: int | None,
    out: Path | None,
    fpr: float,
    input_path: Path | None,
    partition: str,
):
    """Write one verdict row (id, ps, as, verdict) per screened sample."""
    with exit_codes():
        cfg = load_run_config(config, seed, out)
        model = load_model(cfg)
        calibrations = load_calibrations(cfg.out / CALIBRATION_FILE)
        if fpr not in calibrations:
            raise ConfigError(
                f"no calibration for fpr {fpr}; available: {', '.join(f'{t:g}' for t in sorted(calibrations))}"
            )
        if input_path is not None:
            batch = AdversarialBatch.load(input_path)
            samples, ids = batch.perturbed, np.arange(len(batch))
        else:
            data = pick_partition(load_dataset(cfg), partition)
            samples, ids = data.features, np.asarray(data.indices)

        flags, scores = detect_batch(model, samples, calibrations[fpr], ids)
        rows = [
            {
                "id": int(i),
                "ps": float(ps),
                "as": float(as_),
                "verdict": "adversarial" if flag else "benign",
            }
            for i, ps, as_, flag in zip(ids, scores.ps, scores.as_, flags, strict=True)
        ]
        report = ReportGenerator(cfg.out, cfg.document, cfg.seed)
        path = report.write_verdicts(rows)
        rate = float(np.mean(flags)) if len(flags) else 0.0
        click.echo(f"✓ {len(rows)} verdicts written to {path}; flag rate {rate:.2%}")


@main.command("evaluate")
@common_options
@click.option(
    "--use-calibration/--refit",
    default=False,
    help="Reuse calibration.json for the sensitivity detectors instead of refitting",
)
def cmd_evaluate(config: Path, seed: int | None, out: Path | None, use_calibration: bool):
    """Run the attack x epsilon x detector grid and write the CSV report."""
    with exit_codes():
        cfg = load_run_config(config, seed, out)
        if not cfg.attacks:
            raise ConfigError("no attacks configured")
        model = load_model(cfg)
        splits = load_dataset(cfg)
        settings = {name: dict(section) for name, section in cfg.detector_settings.items()}
        settings.setdefault("sensitivity", {})
        probe = dict(settings["sensitivity"].get("probe") or {})
        probe.setdefault("seed", derive_seed(cfg.seed, "probe"))
        settings["sensitivity"]["probe"] = probe
        detectors = build_detectors(cfg.detectors, settings)

        fitted = False
        if use_calibration:
            calibrations = load_calibrations(cfg.out / CALIBRATION_FILE)
            sensitivity = [d for d in detectors if isinstance(d, SensitivityDetector)]
            others = [d for d in detectors if not isinstance(d, SensitivityDetector)]
            for detector in sensitivity:
                detector.use_calibrations(calibrations)
            validation = None
            if cfg.validation_attack is not None:
                validation = validation_pair(
                    model, splits.holdout, cfg.validation_attack, cfg.seed, cfg.samples
                )
            fit_detectors(others, model, splits.calibrate, splits.holdout, cfg.fpr_targets, validation)
            fitted = True

        click.echo(
            f"Evaluating {len(cfg.detectors)} detector(s) x {len(cfg.attacks)} attack(s), "
            f"{cfg.repeats} repeat(s)..."
        )
        result = run_grid(
            model,
            splits,
            detectors,
            cfg.attacks,
            repeats=cfg.repeats,
            seed=cfg.seed,
            samples=cfg.samples,
            fpr_targets=cfg.fpr_targets,
            validation_attack=cfg.validation_attack,
            fit=not fitted,
            config=cfg.document,
        )
        report = ReportGenerator(cfg.out, cfg.document, cfg.seed)
        path = report.generate(result)
        for row in result.flagged:
            click.echo(f"  ℹ {row.attack} eps={row.epsilon:g}: some repeats had no successful samples")

        sensitivity = next((d for d in detectors if isinstance(d, SensitivityDetector)), None)
        if sensitivity is not None:
            curve = fpr_curve(model, sensitivity.full_calibrations, correctly_classified(model, splits.test))
            report.write_fpr_curve(curve)
        click.echo(f"✓ Report written to {path}")


@main.command("sweep")
@common_options
def cmd_sweep(config: Path, seed: int | None, out: Path | None):
    """Validation AUC over the spread grid, written as a CSV curve."""
    with exit_codes():
        cfg = load_run_config(config, seed, out)
        model = load_model(cfg)
        splits = load_dataset(cfg)
        report = ReportGenerator(cfg.out, cfg.document, cfg.seed)
        run_sweep(cfg, model, splits, report)


if __name__ == "__main__":
    main()
