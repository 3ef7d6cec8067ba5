"""Constrained Bayesian optimization of grinding process parameters.

Gaussian-process surrogates with a Matérn-5/2 ARD kernel, constrained
expected improvement, a per-insert cost model, an ask/tell session engine,
a synthetic plant for unattended runs, and a file-backed HTTP service.
"""

from .acquisition import (
    AcquisitionResult,
    constrained_ei,
    expected_improvement,
    feasible_best,
    maximize_acquisition,
    probability_feasible,
)
from .cost import CostParams, cost_per_insert, dressing_overhead, removed_volume
from .gp import (
    Hyperparams,
    MaternGPRegressor,
    NumericalConditioningError,
    log_marginal_likelihood,
    matern52_ard,
    matern52_ard_matrix,
    optimize_hyperparameters,
)
from .plant import PlantModel, default_plant, simulate_run, true_constrained_optimum, true_surfaces
from .runner import IterationRecord, run_simulated_session
from .session import (
    ConvergenceStatus,
    Recommendation,
    Session,
    SessionConfig,
    aggregate_temperature,
)
from .types import (
    ConstraintSpec,
    Domain,
    ProcessParams,
    Proposal,
    TrialOutcome,
    TrialRecord,
    default_constraints,
    default_domain,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionResult",
    "ConstraintSpec",
    "ConvergenceStatus",
    "CostParams",
    "Domain",
    "Hyperparams",
    "IterationRecord",
    "MaternGPRegressor",
    "NumericalConditioningError",
    "PlantModel",
    "ProcessParams",
    "Proposal",
    "Recommendation",
    "Session",
    "SessionConfig",
    "TrialOutcome",
    "TrialRecord",
    "aggregate_temperature",
    "constrained_ei",
    "cost_per_insert",
    "default_constraints",
    "default_domain",
    "default_plant",
    "dressing_overhead",
    "expected_improvement",
    "feasible_best",
    "log_marginal_likelihood",
    "matern52_ard",
    "matern52_ard_matrix",
    "maximize_acquisition",
    "optimize_hyperparameters",
    "probability_feasible",
    "removed_volume",
    "run_simulated_session",
    "simulate_run",
    "true_constrained_optimum",
    "true_surfaces",
]
