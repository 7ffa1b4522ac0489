"""Cache placement for small-cell networks: belief-propagation optimizers,
random-caching baselines, stochastic-geometry analysis, and a Monte-Carlo
experiment harness."""

from .analysis import (
    AnalyticModel,
    average_degrees,
    avg_delay_composed,
    avg_outage_bound,
    beta_reflection,
    build_analytic_model,
    coverage_radial_integral,
    coverage_radial_integral_noiseless,
    cross_group_coeff,
    hyp2f1,
    outage_bound,
    same_group_coeff,
)
from .baselines import exhaustive_search, optimal_fractions, popularity_fractions, random_caching
from .bp import BeliefState, BPResult, CommLedger, FactorGraph, run_bp
from .content import PlacementMatrix, PopularityModel, group_probs, validate_placement, zipf_probs
from .errors import ConfigError, NumericError, ResourceLimitError, TrialError
from .harness import ExperimentConfig, ExperimentResult, MetricKey, compare_analytic, make_config, run_experiment
from .hbp import HbpResult, HbpState, hbp_run
from .network import GeometryParams, Region, Topology, candidate_sets, capacity, sample_fading, sample_ppp, sinr
from .objective import associate, average_delay, delay_file

__version__ = "0.1.0"
