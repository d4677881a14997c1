"""Variance of the score difference under CPO and DPO data."""

from .decomposition import (
    MIN_DECOMPOSITION_DRAWS,
    ControlledFactors,
    DeviationGenerator,
    decomposition_estimate,
    gaussian_factor,
)
from .empirical import (
    MIN_DRAWS,
    Decomposition,
    VarianceConfig,
    VarianceEstimate,
    VarianceReport,
    empirical_variance,
    estimate_variance,
    gradient_norm_proxy,
    matched_variance_comparison,
    variance_stderr,
)
from .scores import Method, as_preference_batch, classify, score, score_difference

__all__ = [
    # Scores
    "Method",
    "classify",
    "as_preference_batch",
    "score",
    "score_difference",
    # Empirical variance
    "MIN_DRAWS",
    "VarianceConfig",
    "VarianceEstimate",
    "VarianceReport",
    "empirical_variance",
    "estimate_variance",
    "matched_variance_comparison",
    "gradient_norm_proxy",
    "variance_stderr",
    # Decomposition
    "MIN_DECOMPOSITION_DRAWS",
    "Decomposition",
    "ControlledFactors",
    "DeviationGenerator",
    "gaussian_factor",
    "decomposition_estimate",
]
