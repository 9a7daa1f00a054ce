"""Timing, run metadata and convergence reports."""

from .metrics import CheckMetrics, MetricsCollector, RunMetadata, create_run_metadata
from .report import ConvergenceReport, ConvergenceRow, fit_slope

__all__ = [
    "CheckMetrics",
    "MetricsCollector",
    "RunMetadata",
    "create_run_metadata",
    "ConvergenceReport",
    "ConvergenceRow",
    "fit_slope",
]
