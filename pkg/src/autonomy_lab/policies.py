"""Transparency policies and the three-arm policy comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.utils.validation import check_array

from .hjb import HjbSolution, optimal_control_at
from .model import ModelParams
from .simulate import EnsembleStats, SimConfig, simulate_ensemble

__all__ = [
    "QUALITY_METRIC",
    "Policy",
    "make_policy",
    "parse_policy",
    "PolicyReport",
    "ComparisonReport",
    "evaluate_policy",
    "compare_policies",
]

QUALITY_METRIC = "horizon-mean-quality:(1/T)*int_0^min(tau,T) Q(I_s) ds"


@dataclass(frozen=True)
class Policy:
    """Maps an observed state (A, I, t) to an information-provision rate.

    ``constant_information`` does not produce a control: the simulator pins
    ``I`` to ``i_pin`` instead (see :attr:`pinned_information`).
    """

    kind: str
    u_max: float = 1.0
    i_pin: float | None = None
    solution: HjbSolution | None = field(default=None, repr=False, compare=False)

    @property
    def pinned_information(self):
        return self.i_pin if self.kind == "constant_information" else None

    def control(self, a, i, t):
        a = np.asarray(a, dtype=float)
        if self.kind == "no_transparency":
            return np.zeros_like(a)
        if self.kind == "max_transparency":
            return np.full_like(a, self.u_max)
        if self.kind == "optimal":
            sol = self.solution
            a = np.clip(a, sol.a_nodes[0], sol.a_nodes[-1])
            i = np.clip(i, sol.i_nodes[0], sol.i_nodes[-1])
            return np.asarray(optimal_control_at(sol, a, i, np.full_like(a, t)), dtype=float)
        raise ValueError("constant_information policies pin I; they have no control")

    def predict(self, X):
        """Controls for rows of (a, i, t)."""
        X = check_array(X)
        return np.array([float(self.control(np.array([a]), np.array([i]), t)[0]) for a, i, t in X])

    @property
    def label(self) -> str:
        return f"constant:{self.i_pin:g}" if self.kind == "constant_information" else self.kind


def make_policy(kind: str, params: ModelParams, solution: HjbSolution | None = None,
                i_pin: float | None = None) -> Policy:
    if kind == "optimal":
        if solution is None:
            raise ValueError("optimal policy requires a solved HJB")
        if solution.params != params:
            raise ValueError("HJB solution was computed for different parameters")
        return Policy(kind, params.u_max, solution=solution)
    if kind in ("no_transparency", "max_transparency"):
        return Policy(kind, params.u_max)
    if kind == "constant_information":
        if i_pin is None or not 0 <= i_pin <= params.i_max:
            raise ValueError(f"i_pin must lie in [0, {params.i_max:g}]")
        return Policy(kind, params.u_max, i_pin=float(i_pin))
    raise ValueError(f"unknown policy kind {kind!r}")


_ALIASES = {"none": "no_transparency", "no": "no_transparency", "max": "max_transparency",
            "optimal": "optimal", "constant": "constant_information"}


def parse_policy(text: str, params: ModelParams, solution: HjbSolution | None = None) -> Policy:
    """Parse ``kind[:arg]``, e.g. ``max``, ``none``, ``optimal``, ``constant:4``."""
    kind, _, arg = text.partition(":")
    kind = _ALIASES.get(kind, kind)
    return make_policy(kind, params, solution=solution, i_pin=float(arg) if arg else None)


@dataclass(frozen=True)
class PolicyReport:
    policy: str
    mean_final_autonomy: float
    disengagement_probability: float
    mean_quality: float
    mean_quality_engaged: float
    mean_discounted_reward: float
    discounted_reward_se: float
    n_paths: int
    seed: int
    quality_metric: str = QUALITY_METRIC

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _report(policy: Policy, stats: EnsembleStats) -> PolicyReport:
    n = stats.n_paths
    dr = stats.discounted_reward
    return PolicyReport(
        policy=policy.label,
        mean_final_autonomy=float(stats.final_a.mean()),
        disengagement_probability=stats.absorption_fraction,
        mean_quality=float(stats.quality_avg.mean()),
        mean_quality_engaged=float(stats.quality_engaged_avg.mean()),
        mean_discounted_reward=float(dr.mean()),
        discounted_reward_se=float(dr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n_paths=n,
        seed=stats.master_seed,
    )


def evaluate_policy(policy: Policy, params: ModelParams, config: SimConfig,
                    return_stats: bool = False):
    stats = simulate_ensemble(policy, params, config)
    report = _report(policy, stats)
    return (report, stats) if return_stats else report


@dataclass(frozen=True)
class ComparisonReport:
    reports: dict
    times: np.ndarray
    mean_autonomy: dict
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
            "checks": dict(self.checks),
            "passed": self.passed,
            "quality_metric": QUALITY_METRIC,
            "quality_metric_note": "published mean-quality values use an unstated metric; "
                                   "only orderings are comparable",
        }


def compare_policies(params: ModelParams, config: SimConfig, solution: HjbSolution) -> ComparisonReport:
    """Optimal vs maximum vs no transparency on common random numbers."""
    arms = {
        "optimal": make_policy("optimal", params, solution),
        "max_transparency": make_policy("max_transparency", params),
        "no_transparency": make_policy("no_transparency", params),
    }
    reports, traj = {}, {}
    times = None
    for name, pol in arms.items():
        rep, stats = evaluate_policy(pol, params, config, return_stats=True)
        reports[name] = rep
        traj[name] = stats.mean_a
        times = stats.times
    opt, mx, no = reports["optimal"], reports["max_transparency"], reports["no_transparency"]
    slack = 3 * max(opt.discounted_reward_se, mx.discounted_reward_se, no.discounted_reward_se)
    checks = {
        "autonomy_none>optimal>max":
            no.mean_final_autonomy > opt.mean_final_autonomy > mx.mean_final_autonomy,
        "disengagement_max>optimal>none":
            mx.disengagement_probability > opt.disengagement_probability > no.disengagement_probability,
        "reward_optimal>=others-3se":
            opt.mean_discounted_reward >= max(mx.mean_discounted_reward,
                                              no.mean_discounted_reward) - slack,
    }
    return ComparisonReport(reports=reports, times=times, mean_autonomy=traj, checks=checks)
