"""Sum-of-trees outcome and propensity models."""

from .bart import (
    BartFit,
    CleverCovariate,
    McmcSettings,
    TrainingPropensity,
    TreePrior,
    clever_covariate,
    diagnostics_csv,
    fit_continuous,
    fit_probit,
    inclusion_proportions,
    posterior_mean_probability,
    predict,
)
from .tree import CompactTree, Forest, Tree

__all__ = [
    "BartFit",
    "CleverCovariate",
    "CompactTree",
    "Forest",
    "McmcSettings",
    "TrainingPropensity",
    "Tree",
    "TreePrior",
    "clever_covariate",
    "diagnostics_csv",
    "fit_continuous",
    "fit_probit",
    "inclusion_proportions",
    "posterior_mean_probability",
    "predict",
]
