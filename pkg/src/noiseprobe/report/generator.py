"""CSV report writer with a JSON provenance sidecar."""

import json
from collections.abc import Iterable, Mapping
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import pandas as pd

from ..eval.grid import REPORT_COLUMNS, EvalReport
from ..utils import config_hash

VERDICT_COLUMNS = ["id", "ps", "as", "verdict"]
SWEEP_COLUMNS = ["spread", "auc", "auc_ps", "auc_as"]


class ReportGenerator:
    """Write evaluation tables under one output directory."""

    def __init__(
        self,
        output_dir: Path | str = "reports",
        config: Mapping[str, Any] | None = None,
        seed: int = 0,
    ):
        """
        Initialize the report generator.

        Args:
            output_dir: Directory where reports will be saved
            config: Run configuration; its hash heads every CSV
            seed: Global seed, recorded alongside the hash
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.config = dict(config or {})
        self.seed = seed

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def header_line(self) -> str:
        return f"# config_hash={self.config_hash} seed={self.seed}\n"

    def write_table(self, frame: pd.DataFrame, output_file: str) -> Path:
        """CSV with the provenance comment as its first line."""
        path = self.output_dir / output_file
        body = frame.to_csv(index=False, float_format="%.6f", lineterminator="\n")
        path.write_text(self.header_line() + body, encoding="utf-8")
        return path

    def write_sidecar(self, table: Path, extra: Mapping[str, Any]) -> Path:
        """``<table>.json`` holding the config echo, hash, seed and a timestamp."""
        document = {
            "table": table.name,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "generated_at": datetime.now(timezone.utc).isoformat(),
            **extra,
        }
        path = table.with_suffix(".json")
        path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path

    def generate(self, report: EvalReport, output_file: str = "report.csv") -> Path:
        """
        Write the evaluation report and its sidecar.

        Args:
            report: Aggregated grid results
            output_file: CSV filename (relative to output directory)

        Returns:
            Path to the CSV report
        """
        path = self.write_table(report.to_frame()[REPORT_COLUMNS], output_file)
        self.write_sidecar(path, report.provenance())
        return path

    def write_sweep(self, rows: Iterable[Mapping[str, float]], output_file: str = "sweep.csv") -> Path:
        return self.write_table(pd.DataFrame(list(rows), columns=SWEEP_COLUMNS), output_file)

    def write_fpr_curve(
        self, rows: Iterable[Mapping[str, float]], output_file: str = "fpr_curve.csv"
    ) -> Path:
        return self.write_table(pd.DataFrame(list(rows)), output_file)

    def write_verdicts(
        self, rows: Iterable[Mapping[str, Any]], output_file: str = "verdicts.csv"
    ) -> Path:
        """Per-sample verdict rows: id, ps, as, verdict."""
        return self.write_table(pd.DataFrame(list(rows), columns=VERDICT_COLUMNS), output_file)
