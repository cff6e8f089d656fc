"""Scenario loading, P1 -> P2 pipeline runs, algorithm comparison and export."""

from .config import ConfigError, Scenario, load_scenario, load_scenario_doc, resolve_scenario
from .pipeline import ExperimentSpec, RunReport, compare_algorithms, run_pipeline

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "RunReport",
    "Scenario",
    "compare_algorithms",
    "load_scenario",
    "load_scenario_doc",
    "resolve_scenario",
    "run_pipeline",
]
