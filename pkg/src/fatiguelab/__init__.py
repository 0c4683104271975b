"""Sequential fatigue-strength estimation toolkit.

Submodules
----------
model        log-normal strength model and campaign domain types
simulator    seeded stochastic experiment oracle
staircase    up-and-down benchmark protocol and its estimators
gp           Gaussian-process prior over historic fatigue data
inference    grid posterior, MAP estimation, acquisition functions
study        convergence-study harness (also the ``study`` CLI)
service      HTTP lab-campaign service
"""

from ._backend import backend_name
from .model import (
    DomainError,
    ExperimentRecord,
    ExperimentSeries,
    MaterialParams,
    Outcome,
    failure_probability,
    series_log_likelihood,
)
from .simulator import SimulatorState, simulate

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "ExperimentRecord",
    "ExperimentSeries",
    "MaterialParams",
    "Outcome",
    "SimulatorState",
    "backend_name",
    "failure_probability",
    "series_log_likelihood",
    "simulate",
    "__version__",
]
