"""Simulation of a utility-preserving automated market maker with myopic traders.

The market maker quotes every order at the smallest charge that keeps its
own multivariate utility at its initial level; traders best-respond one at a
time. The package computes the resulting trading trajectories, their limiting
prices and allocations, and the closed-form or approximate formulas that
predict those limits.
"""

from .core import MarketState, apply_trade, simplex, total_wealth_residual, wealth
from .engine import Random, RoundRobin, Trajectory, convergence_report, run
from .equilibrium import (
    aggregate_penalty_price,
    delta_x,
    exp_limiting_price,
    exp_price_update,
    hara_approx_price,
    kld,
    omega_dagger,
    power_mean_price,
    risk_measure_equilibrium,
    solve_pareto,
)
from .pricing import cost_function_value, induced_scoring_rule, instantaneous_price, price_order
from .trader import best_response
from .utility import Crra, Exponential, Hara, RiskMeasure, utility_from_dict

__version__ = "0.1.0"
