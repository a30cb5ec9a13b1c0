"""Exact oracles and Monte Carlo experiments for the predictive machinery."""

from .contraction import ContinuousDGP, ContractionRow, contraction_experiment, rate_exponent, rows_csv, sd_ratios
from .martingale import (
    BootstrapExact,
    CellUrnExact,
    CidResult,
    CompositeExact,
    LastDrawExact,
    WeightedUrnExact,
    cid_exact_check,
    exact_bootstrap,
    exact_composite,
    exact_ipw_urn,
    negative_control,
)
from .worlds import (
    DiscreteWorld,
    att_identification_check,
    att_identified,
    broken_modularity,
    gformula_ate,
    gformula_residual,
    ipw_identity_check,
    random_world,
    trial_ate,
    trial_att,
    two_point_world,
    wrong_propensity,
)
