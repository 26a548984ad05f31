"""Threshold testing for prophet-style selection: quantile policies, exact DP, multi-test, Monte Carlo."""

from .analytics import check_dominance, exact_policy_value, min_ratio, optimize_alphas, ratio_curve
from .distributions import (
    ContinuousDistribution,
    DiscreteDistribution,
    counterexample3,
    expected_max,
    golden_nugget,
    parse_dist,
    uniform01,
)
from .dp_optimal import brute_force_optimal, ratio, solve
from .errors import ThresholdProbeError
from .multi_test import run_multi_test
from .policies import TABULATED_ALPHAS, QuantilePolicy
from .sim import SimConfig, SimResult, estimate

__version__ = "0.1.0"
