"""Robust binary and multinomial logit estimation under feature and label errors."""
from .core import (
    ChoiceDataset,
    ChoiceObservation,
    ModelSpec,
    StructuralError,
    accuracy,
    choice_probabilities,
    log_likelihood,
    log_likelihood_gradient,
    predict,
    probabilities,
    systematic_utilities,
)
from .norms import dual_norm_maximizer, dual_norm_value, dual_order, lp_norm
from .robust_feature import (
    FeatureUncertainty,
    NormConstraint,
    exact_worst_case_oracle,
    jensen_gap,
    jensen_gap_bound,
    rf_objective,
    rf_objective_multi,
    rf_subgradient,
    rf_upper_bound_objective,
    taylor_regularization_view,
)
from .robust_label import (
    LabelBudget,
    WorstCaseRelabeling,
    inner_relabel_minimization,
    relabel_bruteforce_oracle,
    rl_objective,
    rl_subgradient,
)
from .optimizer import (
    Estimator,
    FitConfig,
    FitResult,
    fit_nominal,
    fit_robust_feature,
    fit_robust_label,
    optimize_norm_split,
)
from .diagnostics import (
    DegeneratePointError,
    TraceReport,
    bias_variance_decomposition,
    fisher_trace_mle,
    fisher_trace_robust_feature,
    fisher_trace_robust_label,
    prediction_error_bound,
)
from .experiments import (
    PerturbationScheme,
    ReplicationReport,
    evaluate_revenue,
    generate_synthetic_test,
    grid_search_tune,
    pricing_optimization,
    run_replications,
)

__version__ = "0.1.0"

__all__ = [
    "ChoiceDataset",
    "ChoiceObservation",
    "ModelSpec",
    "StructuralError",
    "accuracy",
    "choice_probabilities",
    "log_likelihood",
    "log_likelihood_gradient",
    "predict",
    "probabilities",
    "systematic_utilities",
    "dual_norm_maximizer",
    "dual_norm_value",
    "dual_order",
    "lp_norm",
    "FeatureUncertainty",
    "NormConstraint",
    "exact_worst_case_oracle",
    "jensen_gap",
    "jensen_gap_bound",
    "rf_objective",
    "rf_objective_multi",
    "rf_subgradient",
    "rf_upper_bound_objective",
    "taylor_regularization_view",
    "LabelBudget",
    "WorstCaseRelabeling",
    "inner_relabel_minimization",
    "relabel_bruteforce_oracle",
    "rl_objective",
    "rl_subgradient",
    "Estimator",
    "FitConfig",
    "FitResult",
    "fit_nominal",
    "fit_robust_feature",
    "fit_robust_label",
    "optimize_norm_split",
    "DegeneratePointError",
    "TraceReport",
    "bias_variance_decomposition",
    "fisher_trace_mle",
    "fisher_trace_robust_feature",
    "fisher_trace_robust_label",
    "prediction_error_bound",
    "PerturbationScheme",
    "ReplicationReport",
    "evaluate_revenue",
    "generate_synthetic_test",
    "grid_search_tune",
    "pricing_optimization",
    "run_replications",
]

