"""Signal generation, metrics, cost model and Monte Carlo experiments."""
from ..costs import admm_cost, relative_complexity, zoom_budget
from .experiments import EXPERIMENTS, ExperimentReport, peak_variance_study, run_experiment
from .metrics import MetricsConfig, mse, pair_frequencies, support_recovered
from .signals import SignalSpec, add_noise, generate_signal, random_signal

__all__ = [
    "EXPERIMENTS",
    "ExperimentReport",
    "MetricsConfig",
    "SignalSpec",
    "add_noise",
    "admm_cost",
    "generate_signal",
    "mse",
    "pair_frequencies",
    "peak_variance_study",
    "random_signal",
    "relative_complexity",
    "run_experiment",
    "support_recovered",
    "zoom_budget",
]
