"""Experiment harness: data, channel, configuration and the runner."""

from .channel import BudgetViolation, Channel
from .config import ConfigError, ExperimentConfig, TASK_SCHEMES, load_config
from .data import (
    AtomSource,
    CategoricalSource,
    gen_atom_source,
    gen_categorical_data,
    gen_mean_data,
    geometric_probabilities,
)
from .runner import (
    CSV_COLUMNS,
    EstimateReport,
    InvariantViolation,
    error_metrics,
    run_experiment,
    run_repetition,
    write_csv,
)

__all__ = [
    "AtomSource", "BudgetViolation", "CSV_COLUMNS", "CategoricalSource", "Channel", "ConfigError",
    "EstimateReport", "ExperimentConfig", "InvariantViolation", "TASK_SCHEMES", "error_metrics",
    "gen_atom_source", "gen_categorical_data", "gen_mean_data", "geometric_probabilities",
    "load_config", "run_experiment", "run_repetition", "write_csv",
]
