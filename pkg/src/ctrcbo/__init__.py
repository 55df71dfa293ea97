"""Cohort-based trust-region contextual Bayesian optimization (CTRCBO)."""

from .config import ExperimentConfig, load_config
from .optimizer import RunResult, run, run_ctrcbo, run_naive_cbo, run_random_baseline
from .simulator import Environment, benchmark_env_3cohort

__all__ = [
    "Environment",
    "ExperimentConfig",
    "RunResult",
    "benchmark_env_3cohort",
    "load_config",
    "run",
    "run_ctrcbo",
    "run_naive_cbo",
    "run_random_baseline",
]
