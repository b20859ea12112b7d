"""Report generation utilities."""

from .generator import SWEEP_COLUMNS, VERDICT_COLUMNS, ReportGenerator

__all__ = ["SWEEP_COLUMNS", "VERDICT_COLUMNS", "ReportGenerator"]
