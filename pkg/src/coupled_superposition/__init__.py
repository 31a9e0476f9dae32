"""Density evolution, potential thresholds and Monte-Carlo simulation for
block and spatially coupled superposition (sparse spreading) systems with
iterative interference cancellation."""

__version__ = "0.1.0"

from .density_evolution import (DeTrajectory, Schedule, ScheduleKind, run_block_de,
                                run_coupled_de)
from .fixed_points import (FixedPointSet, alpha_s, block_fixed_points, check_fixed_point_bounds, sigma_s,
                           tangency_curve)
from .mse import (Constellation, MseFunction, awgn_capacity, constrained_capacity, g_mse,
                  sigma2_for_capacity)
from .params import SystemParams, effective_load
from .potential import alpha_star, min_potential, potential, u_value
from .rates import achievable_rate, gap_bounds, hard_feedback_rate, map_comparison, optimal_load

__all__ = [
    "Constellation", "DeTrajectory", "FixedPointSet", "MseFunction", "Schedule", "ScheduleKind",
    "SystemParams", "achievable_rate", "alpha_s", "alpha_star", "awgn_capacity",
    "block_fixed_points", "check_fixed_point_bounds", "constrained_capacity", "effective_load", "g_mse",
    "gap_bounds", "hard_feedback_rate", "map_comparison", "min_potential", "optimal_load",
    "potential", "run_block_de", "run_coupled_de", "sigma2_for_capacity", "sigma_s",
    "tangency_curve", "u_value",
]
