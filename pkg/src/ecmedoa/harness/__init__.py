"""Experiment harness: configuration, persistence, Monte Carlo driver and CLI."""

from .io import ConfigError, ExperimentConfig, load_experiment, load_scenario
from .montecarlo import RmseRow, TrialRecord, rmse, run_montecarlo
