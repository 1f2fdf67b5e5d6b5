"""Score-test inference for a coefficient observed with additive measurement error.

The test stays valid when either the outcome regression or the proxy
regression is misspecified, and covers low-dimensional least squares,
penalized (lasso/SCAD/MCP), and non-sparse L1-program nuisance estimators.
"""

from .adaptive import (
    AdaptiveTuning,
    LpProblem,
    LpSolution,
    default_adaptive_tuning,
    simplex_solve,
    sparse_adaptive_fit,
)
from .data import (
    Dataset,
    FitResult,
    Hypothesis,
    PseudoResponse,
    TestResult,
    pseudo_response,
    validate_dataset,
)
from .errors import (
    ConfigError,
    DefInferError,
    DegenerateVariance,
    DidNotConverge,
    DimensionMismatch,
    DomainError,
    EmptyRegion,
    InfeasibleProgram,
    NegativeVariance,
    NonFinite,
    NotPositiveDefinite,
    NumericalBreakdown,
    ParseError,
    RankDeficient,
    SingularDesign,
    TooFewReplicates,
    UnknownDesign,
)
from .linalg import (
    CholeskyFactor,
    cholesky,
    ols_fit,
    std_normal_cdf,
    std_normal_quantile,
)
from .penalized import (
    CdConfig,
    PenaltySpec,
    auto_lambda,
    default_lambda,
    penalized_fit,
    penalty_derivative,
    soft_threshold,
)
from .scoretest import (
    ConfidenceRegion,
    EstimatorChoice,
    NoncentralityInputs,
    confidence_region,
    def_statistic,
    estimate_sigma_u2_from_replicates,
    noncentrality,
    run_test,
    theoretical_power,
)
from .sim import (
    DESIGN_NAMES,
    SimDesign,
    SimReport,
    ar1_covariance,
    generate,
    make_design,
    mvn_sample,
    rep_generator,
    replicate,
    run_monte_carlo,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveTuning", "LpProblem", "LpSolution", "default_adaptive_tuning",
    "simplex_solve", "sparse_adaptive_fit",
    "Dataset", "FitResult", "Hypothesis", "PseudoResponse", "TestResult",
    "pseudo_response", "validate_dataset",
    "ConfigError", "DefInferError", "DegenerateVariance", "DidNotConverge",
    "DimensionMismatch", "DomainError", "EmptyRegion", "InfeasibleProgram",
    "NegativeVariance", "NonFinite", "NotPositiveDefinite",
    "NumericalBreakdown", "ParseError", "RankDeficient", "SingularDesign",
    "TooFewReplicates", "UnknownDesign",
    "CholeskyFactor", "cholesky", "ols_fit", "std_normal_cdf",
    "std_normal_quantile",
    "CdConfig", "PenaltySpec", "auto_lambda", "default_lambda",
    "penalized_fit", "penalty_derivative", "soft_threshold",
    "ConfidenceRegion", "EstimatorChoice", "NoncentralityInputs",
    "confidence_region", "def_statistic", "estimate_sigma_u2_from_replicates",
    "noncentrality", "run_test", "theoretical_power",
    "DESIGN_NAMES", "SimDesign", "SimReport", "ar1_covariance", "generate",
    "make_design", "mvn_sample", "rep_generator", "replicate",
    "run_monte_carlo",
]
