"""
Experiment harness: configs, runners, manifests and the CLI.
"""
from .models import CriterionResult, ExperimentConfig, RunManifest, SuiteConfig, SuiteManifest
from .pipeline import convergence_sweep, run_experiment, run_suite

__all__ = [
    "CriterionResult",
    "ExperimentConfig",
    "RunManifest",
    "SuiteConfig",
    "SuiteManifest",
    "convergence_sweep",
    "run_experiment",
    "run_suite",
]
