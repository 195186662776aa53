"""Experiment orchestration: configuration files, seeded runs, records and reports."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .report import ReportError, report
from .runner import execute, oracle, run

__all__ = ["ConfigError", "ExperimentConfig", "ReportError", "execute", "load_config", "oracle", "parse_config",
           "report", "run"]
