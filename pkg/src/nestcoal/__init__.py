"""Simulation and estimation tools for the nested Kingman coalescent."""

__version__ = "0.1.0"

from .rng import RngStream
from .kingman import (
    HittingTimes,
    BlockTrajectory,
    YuleReport,
    pair_merge_rate,
    sample_block_count,
    expected_blocks,
    simulate_block_trajectory,
    yule_timechange_statistic,
)
from .trajectory import Trajectory, Decimation, sample_counts_at
from .nested import NestedConfig, SpeciesState, total_rates, nested_step, simulate_nested
from .rde import (
    EmpiricalDistribution,
    FixedPointResult,
    GammaEstimate,
    SandwichPair,
    h_merge,
    apply_T,
    wasserstein1,
    iterate_to_fixed_point,
    sandwich_replicate,
    estimate_gamma,
    conditional_mean_w,
    gamma_analytic_bounds,
)
from .special import lambert_w_m1
