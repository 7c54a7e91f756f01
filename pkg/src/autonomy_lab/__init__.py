"""Stochastic-control laboratory for information-induced autonomy depletion."""

__version__ = "0.1.0"

from .model import (ModelParams, PRESETS, get_preset, load_params, drift, critical_threshold,
                    disengagement_boundary, mean_autonomy, variance_autonomy, log_autonomy_params,
                    expected_hitting_time, hitting_probability, quality, autonomy_cost,
                    instantaneous_reward)
from .simulate import SimConfig, simulate_path, simulate_ensemble, exact_constant_i_sample
from .hjb import GridSpec, HjbSolution, HJBSolver, solve_hjb, value_at, optimal_control_at, threshold_curve
from .policies import Policy, make_policy, evaluate_policy, compare_policies
from .validation import run_validation

__all__ = [
    "ModelParams", "PRESETS", "get_preset", "load_params", "drift", "critical_threshold",
    "disengagement_boundary", "mean_autonomy", "variance_autonomy", "log_autonomy_params",
    "expected_hitting_time", "hitting_probability", "quality", "autonomy_cost",
    "instantaneous_reward", "SimConfig", "simulate_path", "simulate_ensemble",
    "exact_constant_i_sample", "GridSpec", "HjbSolution", "HJBSolver", "solve_hjb", "value_at",
    "optimal_control_at", "threshold_curve", "Policy", "make_policy", "evaluate_policy",
    "compare_policies", "run_validation",
]
