"""Meta-learning Thompson sampling bandit simulations.

The package simulates sequences of related bandit tasks whose parameters are
drawn from a shared, unknown task prior.  Adaptive policies learn that prior
across tasks; baselines either know it, guess it once per task, or ignore it.
Closed-form regret bounds can be evaluated against the simulated regret.
"""

from .agents import AgentKind
from .bounds import BoundInputs, total_bound_linear, total_bound_semibandit
from .harness import ExperimentConfig, aggregate, final_regret, run_experiment
from .hierarchy import (
    EnvironmentSpec,
    gaussian_env,
    linear_env,
    mixture_env,
    semibandit_env,
)

__version__ = "0.1.0"

__all__ = [
    "AgentKind",
    "BoundInputs",
    "EnvironmentSpec",
    "ExperimentConfig",
    "aggregate",
    "final_regret",
    "gaussian_env",
    "linear_env",
    "mixture_env",
    "run_experiment",
    "semibandit_env",
    "total_bound_linear",
    "total_bound_semibandit",
    "__version__",
]
