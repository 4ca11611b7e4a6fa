"""Kernel M-estimation of f-divergences and likelihood ratios."""

from .baselines import PartitionEstimate, fit_partition
from .distributions import (
    Beta,
    DistSpec,
    Gaussian,
    GaussianMixture,
    Product,
    RatioOracle,
    TruncatedGaussian,
    analytic_chi2,
    analytic_kl,
    density,
    parse_dist,
    sample,
    true_ratio,
)
from .errors import (
    ArgumentError,
    BandwidthError,
    DivestError,
    InfeasibleError,
    NumericError,
    ParseError,
    SamplingError,
)
from .estimators import (
    DivergenceEstimate,
    RatioModelChi2,
    RatioModelM1,
    RatioModelM2,
    chi2_divergence_estimate,
    fit_chi2,
    fit_m1,
    fit_m2,
    m1_kl_estimate,
    m1_ratio_at,
    m2_kl_estimate,
    m2_log_ratio_at,
    plugin_dphi,
)
from .harness import ExperimentConfig, SweepResult, read_samples, run_sweep, write_csv
from .kernel import KernelSpec, gram, kernel_eval, median_heuristic
from .metrics import bregman_distance, error_summary, fit_rate, hellinger_sq, surrogate_distance
from .solver import SolverConfig, SolverResult, minimize_positive

__version__ = "0.1.0"
