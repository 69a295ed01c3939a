"""Experiments - configuration-driven runs and their reports."""

from app.experiments.models import ExperimentConfig, ReportFormat, ReportRecord, Stage
from app.experiments.reports import emit_report, load_record
from app.experiments.service import bundled_configs, load_config, run_experiment

__all__ = [
    "ExperimentConfig",
    "ReportFormat",
    "ReportRecord",
    "Stage",
    "bundled_configs",
    "emit_report",
    "load_config",
    "load_record",
    "run_experiment",
]
