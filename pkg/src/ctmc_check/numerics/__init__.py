"""Numerical kernels for transient, cumulative and long-run analysis."""

from .foxglynn import FoxGlynnWeights, fox_glynn
from .graph import BsccDecomposition, bscc_decompose
from .oracle import matrix_exponential_oracle
from .solvers import SolverConfig, SolveStats
from .steady import (
    Chain, RewardValues, SteadyState, bscc_stationary, reachability_reward,
    steady_state_distribution, steady_state_values, until_probabilities,
)
from .transient import (
    UniformizationConfig, UniformizationStats, cumulative_state_reward, cumulative_values,
    occupation_times, transient_distribution, transient_values,
)

__all__ = [
    "FoxGlynnWeights", "fox_glynn", "BsccDecomposition", "bscc_decompose",
    "matrix_exponential_oracle", "SolverConfig", "SolveStats", "Chain", "RewardValues",
    "SteadyState", "bscc_stationary", "reachability_reward", "steady_state_distribution",
    "steady_state_values", "until_probabilities", "UniformizationConfig",
    "UniformizationStats", "cumulative_state_reward", "cumulative_values",
    "occupation_times", "transient_distribution", "transient_values",
]
