"""Plausibility-based point and interval estimation for many normal means."""

__version__ = "0.1.0"

from ._validation import (
    DimensionMismatchError,
    EnumerationLimitError,
    InfeasibleStartError,
    InvalidParameterError,
    OptimizerFailureError,
)
from .baselines import (
    EstimateVector,
    chi_square_cdf,
    efron_morris,
    james_stein,
    james_stein_positive_part,
    mean_removed_statistic,
    mle,
)
from .score import (
    BoundarySpec,
    boundary,
    boundary_gradient,
    boundary_quantile,
    make_boundary_spec,
    sample_sorted_uniforms,
)
from .classic import (
    ClassicFit,
    ThetaCollection,
    assertion_specific_plausibility,
    classic_association_value,
    classic_mpe_fit,
    classic_point_estimate,
    full_conditional_estimate,
    marginal_cdf,
    partial_conditional_estimate,
)
from .deconv import (
    AdaptiveResult,
    DeconvProblem,
    Grid,
    IntervalSet,
    PlausibilityRegion,
    SimplexWeights,
    SortedSample,
    adaptive_adjust,
    association_gradient,
    association_value,
    interval_endpoints_given_gamma,
    make_grid,
    mixture_cdf,
    mpe_fit,
    mpe_point_estimate,
    mpe_theta_extremes,
    plausibility_intervals,
    posterior_mean,
    posterior_pmf,
    region_at_level,
    region_at_mpe,
    within_experiment_diagnostic,
)
from .estimators import ClassicMeans, EmpiricalBayesMeans, NotFittedError
from .optimize import (
    OptimizerConfig,
    OptResult,
    minimize_on_simplex,
    optimize_with_inequality,
    project_to_simplex,
)
from .simulate import (
    ReplicationReport,
    Scenario,
    generate_replicate,
    run_coverage_study,
    run_mse_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
