"""Non-overlapping Gaussian latent factor models.

Learning (annealed quasi-Newton solver), covariance estimation from the
fitted factors, information-theoretic sample-complexity bounds, and
cluster/NMI evaluation utilities.
"""

from .bounds import (
    BoundInapplicableError,
    BoundParams,
    RecoveryThreshold,
    UnreachableBudgetError,
    asymptotic_bound,
    log_num_structures,
    min_recoverable_p,
    sample_complexity_lower_bound,
)
from .model_synth import (
    DegenerateColumnError,
    NglfSpec,
    StandardizedData,
    SyntheticDataset,
    generate_nglf,
    population_covariance,
    standardize,
)
from .covariance import (
    CovarianceEstimate,
    NotPositiveDefiniteError,
    diagonal_covariance,
    empirical_covariance,
    factor_covariance,
    gaussian_nll,
    ground_truth_covariance,
    shrinkage_covariance,
)
from .evaluation import (
    ClusterAssignment,
    cluster_assignment,
    exact_conditional_mean_oracle,
    nmi,
    tc_lower_bound,
)
from .experiments import (
    BlessingConfig,
    CovarianceSweepConfig,
    derive_seed,
    refined_fit,
    run_blessing,
    run_covariance_sweep,
    time_per_iteration,
)
from .solver import (
    DEFAULT_ANNEAL_SCHEDULE,
    FactorModel,
    FitTrace,
    MomentSet,
    NumericError,
    SecondMoment,
    SolverConfig,
    SolverState,
    StageTrace,
    StepRejected,
    compute_moments,
    fit,
    gradient,
    init_weights,
    line_search,
    objective,
    qn_direction,
    recover_weights,
)

__all__ = [
    "BoundInapplicableError",
    "BoundParams",
    "RecoveryThreshold",
    "UnreachableBudgetError",
    "asymptotic_bound",
    "log_num_structures",
    "min_recoverable_p",
    "sample_complexity_lower_bound",
    "DegenerateColumnError",
    "NglfSpec",
    "StandardizedData",
    "SyntheticDataset",
    "generate_nglf",
    "population_covariance",
    "standardize",
    "CovarianceEstimate",
    "NotPositiveDefiniteError",
    "diagonal_covariance",
    "empirical_covariance",
    "factor_covariance",
    "gaussian_nll",
    "ground_truth_covariance",
    "shrinkage_covariance",
    "ClusterAssignment",
    "cluster_assignment",
    "exact_conditional_mean_oracle",
    "nmi",
    "tc_lower_bound",
    "BlessingConfig",
    "CovarianceSweepConfig",
    "derive_seed",
    "refined_fit",
    "run_blessing",
    "run_covariance_sweep",
    "time_per_iteration",
    "DEFAULT_ANNEAL_SCHEDULE",
    "FactorModel",
    "FitTrace",
    "MomentSet",
    "NumericError",
    "SecondMoment",
    "SolverConfig",
    "SolverState",
    "StageTrace",
    "StepRejected",
    "compute_moments",
    "fit",
    "gradient",
    "init_weights",
    "line_search",
    "objective",
    "qn_direction",
    "recover_weights",
    "__version__",
]

__version__ = "0.1.0"
