"""Model parameters and closed-form quantities of the autonomy process.

Autonomy ``A`` follows a geometric Brownian motion whose drift depends on the
information level ``I``::

    dA = mu(I) A dt + sigma_a A dW
    mu(I) = mu0 - beta I - gamma I**2

Everything here is a pure function of an immutable :class:`ModelParams`.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ModelParams",
    "PRESETS",
    "get_preset",
    "load_params",
    "Regime",
    "DriftValue",
    "HittingTime",
    "drift",
    "drift_rate",
    "critical_threshold",
    "disengagement_boundary",
    "mean_autonomy",
    "variance_autonomy",
    "log_autonomy_params",
    "expected_hitting_time",
    "hitting_probability",
    "quality",
    "quality_argmax",
    "autonomy_cost",
    "instantaneous_reward",
]


@dataclass(frozen=True)
class ModelParams:
    """All scalar parameters of the model.

    Defaults reproduce the ``paper-2025`` preset. ``u_max`` and ``i0`` are not
    given by the source model and default to 1.0 and 0.0.
    """

    mu0: float = 0.10
    beta: float = 0.05
    gamma: float = 0.01
    sigma_a: float = 0.20
    a0: float = 1.0
    alpha0: float = 0.5
    sigma_i: float = 0.1
    i_max: float = 5.0
    rho: float = -0.3
    q_max: float = 10.0
    beta_q: float = 0.04
    kappa: float = 2.0
    c: float = 0.5
    delta: float = 0.05
    b0: float = 0.9
    beta_wm: float = 0.1
    wm: float = 4.0
    horizon: float = 10.0
    u_max: float = 1.0
    i0: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"{f.name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        # zero is allowed for the rates below so degenerate cases stay expressible
        for name in ("mu0", "beta", "gamma", "sigma_a", "alpha0", "sigma_i",
                     "q_max", "beta_q", "kappa", "c", "delta", "beta_wm", "wm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("a0", "i_max", "horizon", "u_max", "b0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if not -1.0 <= self.rho <= 0.0:
            raise ValueError(f"rho must lie in [-1, 0], got {self.rho}")
        if not 0.0 <= self.i0 <= self.i_max:
            raise ValueError(f"i0 must lie in [0, i_max], got {self.i0}")
        b = self.b0 - self.beta_wm * self.wm
        if not 0.0 < b < self.a0:
            raise ValueError(f"disengagement boundary {b:g} must lie in (0, a0={self.a0:g})")

    @property
    def boundary(self) -> float:
        """Disengagement boundary at the configured working-memory capacity."""
        return self.b0 - self.beta_wm * self.wm

    def strictly_positive(self) -> bool:
        """True when every rate the model assumes positive is strictly positive."""
        return all(getattr(self, n) > 0 for n in
                   ("mu0", "beta", "gamma", "sigma_a", "alpha0", "q_max",
                    "kappa", "c", "b0", "beta_wm"))

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {"paper-2025": ModelParams()}


def get_preset(name: str) -> ModelParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def parse_flat_config(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments allowed) into a dict of strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case
    parser.read_string("[root]\n" + text)
    return dict(parser["root"])


def load_params(path=None, preset: str = "paper-2025", overrides: dict | None = None) -> ModelParams:
    """Resolve parameters from a preset, an optional config file and overrides.

    Unknown keys are rejected. Keys in the file that are not model parameters
    raise ``ValueError``; callers that mix sections should split them first.
    """
    base = get_preset(preset)
    values = {}
    if path is not None:
        values.update(parse_flat_config(Path(path).read_text()))
    if overrides:
        values.update(overrides)
    known = {f.name for f in dataclasses.fields(ModelParams)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown parameter keys: {unknown}")
    return base.replace(**{k: float(v) for k, v in values.items()})


class Regime(str, Enum):
    SUSTAINING = "sustaining"
    DEPLETING = "depleting"


@dataclass(frozen=True)
class DriftValue:
    value: float
    regime: Regime


@dataclass(frozen=True)
class HittingTime:
    """Expected first-passage time; ``value`` is None when unbounded."""

    value: float | None

    @property
    def finite(self) -> bool:
        return self.value is not None

    @property
    def kind(self) -> str:
        return "finite" if self.finite else "unbounded"

    def __float__(self) -> float:
        return math.inf if self.value is None else self.value


def _check_info(i):
    if np.any(np.asarray(i) < 0):
        raise ValueError("information level must be non-negative")


def drift_rate(i, params: ModelParams):
    """Vectorised drift ``mu0 - beta*i - gamma*i**2`` (no regime tag)."""
    i = np.asarray(i, dtype=float)
    return params.mu0 - params.beta * i - params.gamma * i * i


def drift(i: float, params: ModelParams) -> DriftValue:
    _check_info(i)
    value = float(drift_rate(i, params))
    regime = Regime.SUSTAINING if value >= 0.5 * params.sigma_a ** 2 else Regime.DEPLETING
    return DriftValue(value, regime)


def critical_threshold(params: ModelParams) -> float:
    """Information level at which the drift changes sign."""
    if params.gamma <= 0:
        raise ValueError("critical threshold requires gamma > 0")
    b, g = params.beta, params.gamma
    return (-b + math.sqrt(b * b + 4.0 * g * params.mu0)) / (2.0 * g)


def disengagement_boundary(wm: float, params: ModelParams) -> float:
    b = params.b0 - params.beta_wm * wm
    if b <= 0:
        raise ValueError(f"boundary b0 - beta_wm*wm = {b:g} is not positive")
    return b


def mean_autonomy(t, i, params: ModelParams):
    """Boundary-free mean ``a0 * exp(mu(i) t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    _check_info(i)
    out = params.a0 * np.exp(drift_rate(i, params) * t)
    return float(out) if out.ndim == 0 else out


def variance_autonomy(t, i, params: ModelParams):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    _check_info(i)
    mu = drift_rate(i, params)
    out = params.a0 ** 2 * np.exp(2.0 * mu * t) * np.expm1(params.sigma_a ** 2 * t)
    return float(out) if out.ndim == 0 else out


def log_autonomy_params(t: float, i: float, params: ModelParams) -> tuple[float, float]:
    """Location and squared scale of the normal law of ``log A_t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    _check_info(i)
    mu = float(drift_rate(i, params))
    loc = math.log(params.a0) + (mu - 0.5 * params.sigma_a ** 2) * t
    return loc, params.sigma_a ** 2 * t


def expected_hitting_time(a_start: float, i: float, wm: float, params: ModelParams) -> HittingTime:
    b = disengagement_boundary(wm, params)
    if a_start <= b:
        raise ValueError(f"a_start={a_start:g} is at or below the boundary {b:g}")
    gap = 0.5 * params.sigma_a ** 2 - drift(i, params).value
    if gap <= 0:
        return HittingTime(None)
    return HittingTime(math.log(a_start / b) / gap)


def hitting_probability(a_start: float, i: float, wm: float, t_horizon: float,
                        params: ModelParams) -> float:
    """P(min_{s<=t_horizon} A_s <= B) for constant information, continuous monitoring."""
    if t_horizon < 0:
        raise ValueError("t_horizon must be non-negative")
    b = disengagement_boundary(wm, params)
    if a_start <= b:
        raise ValueError(f"a_start={a_start:g} is at or below the boundary {b:g}")
    if t_horizon == 0:
        return 0.0
    nu = drift(i, params).value - 0.5 * params.sigma_a ** 2
    log_gap = math.log(b / a_start)  # negative
    sa = params.sigma_a
    if sa == 0:
        return 1.0 if nu < 0 and log_gap / nu <= t_horizon else 0.0
    s = sa * math.sqrt(t_horizon)
    first = ndtr((log_gap - nu * t_horizon) / s)
    # (B/a)^(2 nu / sigma^2), computed in log space to avoid overflow
    log_weight = 2.0 * nu / sa ** 2 * log_gap
    second_cdf = ndtr((log_gap + nu * t_horizon) / s)
    second = 0.0 if second_cdf == 0 else math.exp(log_weight + math.log(second_cdf))
    return float(min(1.0, first + second))


def quality(i, params: ModelParams):
    """Inverted-U decision quality ``q_max * i * exp(-beta_q * i**2)``."""
    _check_info(i)
    i = np.asarray(i, dtype=float)
    out = params.q_max * i * np.exp(-params.beta_q * i * i)
    return float(out) if out.ndim == 0 else out


def quality_argmax(params: ModelParams) -> float:
    return 1.0 / math.sqrt(2.0 * params.beta_q)


def autonomy_cost(a, params: ModelParams):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("autonomy must be non-negative")
    out = params.kappa * (params.a0 - a) ** 2
    return float(out) if out.ndim == 0 else out


def instantaneous_reward(a, i, u, params: ModelParams):
    """Quality minus autonomy cost minus linear control cost."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > params.u_max):
        raise ValueError(f"control must lie in [0, u_max={params.u_max:g}]")
    out = quality(i, params) - autonomy_cost(a, params) - params.c * u
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out
