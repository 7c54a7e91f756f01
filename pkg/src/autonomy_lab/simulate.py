"""Monte Carlo paths of the coupled autonomy/information system.

Autonomy is advanced in log space, which is exact for a constant drift over a
step and keeps ``A`` positive. Information follows an Euler step clamped to
``[0, i_max]``, driven by noise correlated with the autonomy noise.

Randomness is drawn from one substream per path, keyed by
``(master_seed, path_index)``. Paths are simulated in fixed-size chunks, so the
output does not depend on how chunks are distributed across workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .model import ModelParams, drift_rate, quality

__all__ = [
    "GENERATOR_ID",
    "SimConfig",
    "PathBatch",
    "Path",
    "EnsembleStats",
    "path_rng",
    "draw_noise",
    "exact_constant_i_sample",
    "exact_ensemble",
    "run_paths",
    "simulate_path",
    "simulate_ensemble",
]

GENERATOR_ID = f"numpy-{np.__version__}:PCG64:SeedSequence(master_seed,path_index)"


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``scheme`` is ``"log"`` (exact log-increment update for the autonomy) or
    ``"euler"`` (plain Euler-Maruyama on ``A``). With ``bridge`` on, a path
    whose endpoints both sit above the boundary can still be absorbed inside
    the step, with the Brownian-bridge crossing probability.
    """

    dt: float = 0.01
    n_paths: int = 5000
    master_seed: int = 42
    record_stride: int = 10
    boundary_enabled: bool = True
    scheme: str = "log"
    bridge: bool = True
    chunk_size: int = 250
    n_jobs: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be at least 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.scheme not in ("log", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def replace(self, **changes) -> "SimConfig":
        import dataclasses
        return dataclasses.replace(self, **changes)


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, path_index])))


def _step_times(horizon: float, dt: float) -> np.ndarray:
    n = max(1, math.ceil(horizon / dt - 1e-9))
    t = np.arange(n + 1) * dt
    t[-1] = horizon
    return t


def draw_noise(master_seed: int, indices, n_steps: int) -> np.ndarray:
    """Per-path noise of shape (len(indices), n_steps, 3): z_a, z_i, uniform."""
    out = np.empty((len(indices), n_steps, 3))
    for row, idx in enumerate(indices):
        rng = path_rng(master_seed, int(idx))
        out[row, :, :2] = rng.standard_normal((n_steps, 2))
        out[row, :, 2] = rng.random(n_steps)
    return out


def exact_constant_i_sample(t, i, z, params: ModelParams):
    """Exact draw of A_t for constant information from a standard normal ``z``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    mu = drift_rate(i, params)
    sa = params.sigma_a
    out = params.a0 * np.exp((mu - 0.5 * sa * sa) * t + sa * np.sqrt(t) * np.asarray(z, dtype=float))
    return float(out) if out.ndim == 0 else out


def exact_ensemble(times, i: float, params: ModelParams, n_paths: int, master_seed: int) -> np.ndarray:
    """Boundary-free exact samples of A at ``times`` along each path.

    Returns an array of shape (n_paths, len(times)); path ``k`` uses the
    substream ``(master_seed, k)``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be non-negative and strictly increasing")
    dts = np.diff(times, prepend=0.0)
    w = np.empty((n_paths, len(times)))
    for k in range(n_paths):
        w[k] = np.cumsum(np.sqrt(dts) * path_rng(master_seed, k).standard_normal(len(times)))
    sa = params.sigma_a
    mu = float(drift_rate(i, params))
    return params.a0 * np.exp((mu - 0.5 * sa * sa) * times + sa * w)


@dataclass
class PathBatch:
    """Raw output of :func:`run_paths` for a set of path indices.

    Recorded arrays have shape (n_paths, n_records). Absorbed paths are frozen
    at the boundary in ``a`` and at their last information level in ``i``.
    """

    indices: np.ndarray
    times: np.ndarray
    a: np.ndarray
    i: np.ndarray
    u: np.ndarray
    absorbed: np.ndarray
    tau: np.ndarray
    tau_step: np.ndarray
    discounted_reward: np.ndarray
    quality_integral: np.ndarray
    engaged_time: np.ndarray
    horizon: float

    @classmethod
    def concat(cls, batches) -> "PathBatch":
        batches = list(batches)
        kw = {}
        for name in ("indices", "a", "i", "u", "absorbed", "tau", "tau_step",
                     "discounted_reward", "quality_integral", "engaged_time"):
            kw[name] = np.concatenate([getattr(b, name) for b in batches], axis=0)
        return cls(times=batches[0].times, horizon=batches[0].horizon, **kw)


def _policy_control(policy, a, i, t, u_max):
    u = np.asarray(policy.control(a, i, t), dtype=float)
    u = np.broadcast_to(u, a.shape).astype(float)
    if np.any(u < 0) or np.any(u > u_max) or not np.all(np.isfinite(u)):
        raise ValueError(f"policy returned a control outside [0, {u_max:g}] at t={t:g}")
    return u


def run_paths(policy, params: ModelParams, config: SimConfig, indices=None, noise=None) -> PathBatch:
    """Simulate the given path indices in one vectorised sweep.

    ``noise`` overrides the generated draws (shape (n, n_steps, 3)); it exists
    so that refinement studies can couple Brownian increments across step sizes.
    """
    if config.dt > params.horizon:
        raise ValueError("dt must not exceed the horizon")
    if indices is None:
        indices = np.arange(config.n_paths)
    indices = np.asarray(indices, dtype=np.int64)
    steps = _step_times(params.horizon, config.dt)
    n_steps = len(steps) - 1
    if noise is None:
        noise = draw_noise(config.master_seed, indices, n_steps)
    elif noise.shape != (len(indices), n_steps, 3):
        raise ValueError(f"noise must have shape {(len(indices), n_steps, 3)}")

    n = len(indices)
    pin = getattr(policy, "pinned_information", None)
    sa, si, rho = params.sigma_a, params.sigma_i, params.rho
    rho_c = math.sqrt(1.0 - rho * rho)
    log_b = math.log(params.boundary)

    rec_steps = list(range(0, n_steps + 1, config.record_stride))
    if rec_steps[-1] != n_steps:
        rec_steps.append(n_steps)
    rec_index = {k: r for r, k in enumerate(rec_steps)}
    n_rec = len(rec_steps)
    rec_a = np.empty((n, n_rec))
    rec_i = np.empty((n, n_rec))
    rec_u = np.zeros((n, n_rec))
    rec_abs = np.zeros((n, n_rec), dtype=bool)

    log_a = np.full(n, math.log(params.a0))
    info = np.full(n, params.i0 if pin is None else float(pin))
    alive = np.ones(n, dtype=bool)
    tau = np.full(n, np.nan)
    tau_step = np.full(n, -1, dtype=np.int64)
    disc = np.zeros(n)
    qint = np.zeros(n)
    engaged = np.zeros(n)
    u = np.zeros(n)

    def record(k):
        r = rec_index[k]
        rec_a[:, r] = np.where(alive, np.exp(log_a), params.boundary)
        rec_i[:, r] = info
        rec_u[:, r] = np.where(alive, u, 0.0)
        rec_abs[:, r] = ~alive

    for k in range(n_steps):
        t, h = steps[k], steps[k + 1] - steps[k]
        a = np.exp(log_a)
        if pin is None:
            u = np.zeros(n)
            if alive.any():
                u[alive] = _policy_control(policy, a[alive], info[alive], t, params.u_max)
        if k in rec_index:
            record(k)
        if not alive.any():
            for kk in rec_steps:
                if kk > k:
                    record(kk)
            break
        za, zi, unif = noise[:, k, 0], noise[:, k, 1], noise[:, k, 2]
        mu = drift_rate(info, params)
        if config.scheme == "log":
            new_log_a = log_a + (mu - 0.5 * sa * sa) * h + sa * math.sqrt(h) * za
        else:
            new_a = a * (1.0 + mu * h + sa * math.sqrt(h) * za)
            if np.any(new_a[alive] <= 0) and not config.boundary_enabled:
                raise FloatingPointError("Euler step produced non-positive autonomy; reduce dt")
            new_log_a = np.log(np.maximum(new_a, np.finfo(float).tiny))

        frac = np.ones(n)
        if config.boundary_enabled:
            crossed = alive & (new_log_a <= log_b)
            gap0 = log_a - log_b
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = np.where(crossed, gap0 / (log_a - new_log_a), 1.0)
            if config.bridge and sa > 0:
                cand = alive & ~crossed
                p_cross = np.zeros(n)
                p_cross[cand] = np.exp(-2.0 * gap0[cand] * (new_log_a[cand] - log_b) / (sa * sa * h))
                in_step = cand & (unif < p_cross)
                theta = np.where(in_step, 0.5, theta)
                crossed = crossed | in_step
            frac = np.where(crossed, np.clip(theta, 0.0, 1.0), 1.0)
        else:
            crossed = np.zeros(n, dtype=bool)

        r = quality(info, params) - params.kappa * (params.a0 - a) ** 2 - params.c * u
        live_h = np.where(alive, frac * h, 0.0)
        disc += math.exp(-params.delta * t) * r * live_h
        qint += quality(info, params) * live_h
        engaged += live_h

        newly = alive & crossed
        tau[newly] = t + frac[newly] * h
        tau_step[newly] = k + 1
        still = alive & ~crossed
        log_a = np.where(still, new_log_a, log_a)
        if pin is None:
            di = params.alpha0 * u * h + si * math.sqrt(h) * (rho * za + rho_c * zi)
            info = np.where(still, np.clip(info + di, 0.0, params.i_max), info)
        alive = still

    else:
        u = np.zeros(n)
        record(n_steps)
    return PathBatch(indices=indices, times=steps[rec_steps], a=rec_a, i=rec_i, u=rec_u,
                     absorbed=rec_abs, tau=tau, tau_step=tau_step, discounted_reward=disc,
                     quality_integral=qint, engaged_time=engaged, horizon=params.horizon)


@dataclass(frozen=True)
class Path:
    """One trajectory. ``samples`` columns are t, A, I, u; ``absorbed`` per sample."""

    samples: np.ndarray
    absorbed: np.ndarray
    absorption: tuple[float, int] | None
    terminal: tuple[float, float]

    @property
    def t(self):
        return self.samples[:, 0]

    @property
    def a(self):
        return self.samples[:, 1]

    @property
    def i(self):
        return self.samples[:, 2]


def simulate_path(policy, params: ModelParams, config: SimConfig, path_index: int) -> Path:
    if not 0 <= path_index < config.n_paths:
        raise ValueError(f"path_index {path_index} outside [0, {config.n_paths})")
    b = run_paths(policy, params, config, indices=[path_index])
    samples = np.column_stack([b.times, b.a[0], b.i[0], b.u[0]])
    absorption = None if np.isnan(b.tau[0]) else (float(b.tau[0]), int(b.tau_step[0]))
    return Path(samples=samples, absorbed=b.absorbed[0].copy(), absorption=absorption,
                terminal=(float(b.a[0, -1]), float(b.i[0, -1])))


@dataclass(frozen=True)
class EnsembleStats:
    """Aggregates over an ensemble; absorbed paths count at the boundary value."""

    times: np.ndarray
    mean_a: np.ndarray
    var_a: np.ndarray
    mean_i: np.ndarray
    absorbed_fraction_t: np.ndarray
    absorption_fraction: float
    absorption_times: np.ndarray
    final_a: np.ndarray
    discounted_reward: np.ndarray
    quality_avg: np.ndarray
    quality_engaged_avg: np.ndarray
    n_paths: int
    master_seed: int
    batch: PathBatch = field(repr=False, compare=False, default=None)

    @classmethod
    def from_batch(cls, batch: PathBatch, master_seed: int) -> "EnsembleStats":
        n = batch.a.shape[0]
        ddof = 1 if n > 1 else 0
        with np.errstate(invalid="ignore", divide="ignore"):
            q_eng = np.where(batch.engaged_time > 0, batch.quality_integral / batch.engaged_time, 0.0)
        absorbed_end = ~np.isnan(batch.tau)
        return cls(
            times=batch.times,
            mean_a=batch.a.mean(axis=0),
            var_a=batch.a.var(axis=0, ddof=ddof),
            mean_i=batch.i.mean(axis=0),
            absorbed_fraction_t=batch.absorbed.mean(axis=0),
            absorption_fraction=float(absorbed_end.mean()),
            absorption_times=batch.tau[absorbed_end],
            final_a=batch.a[:, -1],
            discounted_reward=batch.discounted_reward,
            quality_avg=batch.quality_integral / batch.horizon,
            quality_engaged_avg=q_eng,
            n_paths=n,
            master_seed=master_seed,
            batch=batch,
        )


def simulate_ensemble(policy, params: ModelParams, config: SimConfig) -> EnsembleStats:
    """Simulate ``config.n_paths`` paths, optionally across ``config.n_jobs`` workers."""
    idx = np.arange(config.n_paths)
    chunks = [idx[s:s + config.chunk_size] for s in range(0, config.n_paths, config.chunk_size)]
    if config.n_jobs == 1:
        batches = [run_paths(policy, params, config, c) for c in chunks]
    else:
        batches = Parallel(n_jobs=config.n_jobs)(
            delayed(run_paths)(policy, params, config, c) for c in chunks)
    return EnsembleStats.from_batch(PathBatch.concat(batches), config.master_seed)
