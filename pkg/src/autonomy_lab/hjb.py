"""Explicit finite-difference solver for the optimal-transparency HJB equation.

The state is (A, I) on ``[B, a_max] x [0, i_max]``. The solver works in
``x = log A``, where the generator reads::

    V_t + (mu(I) - sigma_a**2/2) V_x + sigma_a**2/2 V_xx
        + alpha0 u V_I + sigma_i**2/2 V_II + rho sigma_a sigma_i V_xI

Advection is upwinded by sign, diffusion and the cross term are central, and
the control is picked from {0, u_max} node by node. Boundary treatment:

* ``A = B``: absorbed, ``V = 0``.
* ``A = a_max``: linear extrapolation (``V_xx = 0``).
* ``I = 0`` and ``I = i_max``: mirror ghost nodes (information is held inside
  the interval); no outward advection at ``i_max``.

Terminal reward is zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .model import ModelParams, drift_rate, get_preset, quality

__all__ = [
    "TERMINAL_CONVENTION",
    "DUMP_VERSION",
    "StabilityError",
    "GridSpec",
    "HjbSolution",
    "stability_bound",
    "solve_hjb",
    "value_at",
    "optimal_control_at",
    "threshold_curve",
    "control_area_fraction",
    "refinement_deltas",
    "HJBSolver",
]

TERMINAL_CONVENTION = "psi=0;absorbed-value=0"
DUMP_VERSION = 1
DEFAULT_PROBES = ((1.5, 1.0, 0.0), (1.0, 2.0, 5.0), (0.7, 3.0, 5.0))


class StabilityError(ValueError):
    """Explicit time step exceeds the stability bound."""


@dataclass(frozen=True)
class GridSpec:
    """Discretisation of the state space.

    Autonomy nodes are uniform in ``log A`` between ``a_range``; information
    nodes are uniform on ``i_range``. ``n_t=None`` picks the number of time
    steps from the stability bound (times ``safety``). Only time slices on a
    ``record_dt`` spacing are kept.
    """

    a_range: tuple[float, float]
    i_range: tuple[float, float]
    n_a: int = 200
    n_i: int = 100
    n_t: int | None = None
    record_dt: float = 0.05
    safety: float = 0.9

    @classmethod
    def for_params(cls, params: ModelParams, a_max: float = 3.0, **kw) -> "GridSpec":
        return cls(a_range=(params.boundary, float(a_max)), i_range=(0.0, params.i_max), **kw)

    def check(self, params: ModelParams):
        if not math.isclose(self.a_range[0], params.boundary, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"a_min must equal the boundary {params.boundary:g}")
        if self.a_range[1] < 2.5:
            raise ValueError("a_max must be at least 2.5")
        if tuple(self.i_range) != (0.0, params.i_max):
            raise ValueError(f"i_range must be (0, {params.i_max:g})")
        if self.n_a < 50 or self.n_i < 50:
            raise ValueError("n_a and n_i must be at least 50")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.a_range, self.i_range, self.n_a * factor, self.n_i * factor,
                        None, self.record_dt, self.safety)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HjbSolution:
    params: ModelParams
    grid: GridSpec
    a_nodes: np.ndarray
    i_nodes: np.ndarray
    times: np.ndarray
    value: np.ndarray
    control: np.ndarray
    dt: float
    n_steps: int
    bound: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def x_nodes(self):
        return np.log(self.a_nodes)

    def save(self, path) -> None:
        """Compact binary dump (``.npz``) with a versioned JSON header."""
        header = {
            "version": DUMP_VERSION,
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "terminal": TERMINAL_CONVENTION,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "bound": self.bound,
            "diagnostics": self.diagnostics,
        }
        with open(path, "wb") as fh:
            np.savez_compressed(fh, header=np.array(json.dumps(header, sort_keys=True)),
                                a_nodes=self.a_nodes, i_nodes=self.i_nodes, times=self.times,
                                value=self.value, control=self.control.astype(np.uint8))

    @classmethod
    def load(cls, path) -> "HjbSolution":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("version") != DUMP_VERSION:
                raise ValueError(f"unsupported solution dump version {header.get('version')}")
            if header.get("terminal") != TERMINAL_CONVENTION:
                raise ValueError(f"unexpected terminal convention {header.get('terminal')!r}")
            grid = header["grid"]
            grid["a_range"] = tuple(grid["a_range"])
            grid["i_range"] = tuple(grid["i_range"])
            return cls(params=ModelParams(**header["params"]), grid=GridSpec(**grid),
                       a_nodes=z["a_nodes"], i_nodes=z["i_nodes"], times=z["times"],
                       value=z["value"], control=z["control"].astype(bool), dt=header["dt"],
                       n_steps=header["n_steps"], bound=header["bound"],
                       diagnostics=header["diagnostics"])

    def to_rows(self):
        """Long-format rows (t, a, i, V, u) over the stored slices."""
        t, a, i = np.meshgrid(self.times, self.a_nodes, self.i_nodes, indexing="ij")
        u = self.control * self.params.u_max
        return np.column_stack([t.ravel(), a.ravel(), i.ravel(), self.value.ravel(), u.ravel()])


def _spacings(params: ModelParams, grid: GridSpec):
    x = np.linspace(math.log(grid.a_range[0]), math.log(grid.a_range[1]), grid.n_a)
    i = np.linspace(grid.i_range[0], grid.i_range[1], grid.n_i)
    return x, i, x[1] - x[0], i[1] - i[0]


def stability_bound(params: ModelParams, grid: GridSpec) -> float:
    """Largest explicit step for which the update stays a convex-type combination.

    Sums the diagonal weights of the stencil using the maximal coefficients.
    """
    x, i, dx, di = _spacings(params, grid)
    sa, si = params.sigma_a, params.sigma_i
    adv_x = np.max(np.abs(drift_rate(i, params) - 0.5 * sa * sa))
    rate = (sa * sa / dx ** 2 + si * si / di ** 2 + abs(params.rho) * sa * si / (dx * di)
            + adv_x / dx + params.alpha0 * params.u_max / di + params.delta)
    return 1.0 / rate


def _control_gain(V, params: ModelParams, di: float):
    """Net gain of u_max over u=0 at every node, from forward differences in I."""
    d_i = np.zeros_like(V)
    d_i[..., :-1] = (V[..., 1:] - V[..., :-1]) / di
    return params.u_max * (params.alpha0 * d_i - params.c)


def solve_hjb(params: ModelParams, grid: GridSpec) -> HjbSolution:
    """Backward induction from the zero terminal condition."""
    grid.check(params)
    x, inodes, dx, di = _spacings(params, grid)
    a_nodes = np.exp(x)
    a_nodes[0] = grid.a_range[0]
    T = params.horizon
    bound = stability_bound(params, grid)

    n_rec = max(1, round(T / grid.record_dt))
    if grid.n_t is None:
        per_rec = math.ceil(T / n_rec / (grid.safety * bound))
        n_t = per_rec * n_rec
    else:
        n_t = grid.n_t
        if T / n_t > bound:
            raise StabilityError(f"time step {T / n_t:.3e} exceeds stability bound {bound:.3e} "
                                 f"(need n_t >= {math.ceil(T / bound)})")
        if n_t % n_rec:
            raise ValueError(f"n_t={n_t} must be a multiple of the {n_rec} recorded intervals")
        per_rec = n_t // n_rec
    dt = T / n_t

    sa, si, rho = params.sigma_a, params.sigma_i, params.rho
    b = (drift_rate(inodes, params) - 0.5 * sa * sa)[None, :]
    b_pos, b_neg = np.maximum(b, 0), np.minimum(b, 0)
    reward0 = (quality(inodes, params)[None, :]
               - params.kappa * (params.a0 - a_nodes[1:, None]) ** 2)
    d_xx, d_ii = 0.5 * sa * sa / dx ** 2, 0.5 * si * si / di ** 2
    d_xi = rho * sa * si / (4 * dx * di)
    gain_coef = params.alpha0 * params.u_max / di
    u_cost = params.c * params.u_max

    nx, ni = grid.n_a, grid.n_i
    V = np.zeros((nx, ni))
    Vp = np.zeros((nx + 1, ni + 2))
    values = np.empty((n_rec + 1, nx, ni))
    values[n_rec] = V

    for n in range(n_t - 1, -1, -1):
        Vp[:nx, 1:-1] = V
        Vp[nx, 1:-1] = 2 * V[-1] - V[-2]
        Vp[:, 0] = Vp[:, 2]
        Vp[:, -1] = Vp[:, -3]
        C = Vp[1:nx, 1:-1]
        N = Vp[2:, 1:-1]
        S = Vp[:nx - 1, 1:-1]
        E = Vp[1:nx, 2:]
        W = Vp[1:nx, :-2]
        lv = (b_pos * (N - C) + b_neg * (C - S)) / dx
        lv += d_xx * (N - 2 * C + S) + d_ii * (E - 2 * C + W)
        lv += d_xi * (Vp[2:, 2:] - Vp[2:, :-2] - Vp[:-2, 2:] + Vp[:-2, :-2])
        gain = gain_coef * (E - C) - u_cost
        gain[:, -1] = -u_cost
        np.maximum(gain, 0.0, out=gain)
        V_new = np.empty_like(V)
        V_new[0] = 0.0
        V_new[1:] = C + dt * (lv + gain + reward0 - params.delta * C)
        V = V_new
        if n % per_rec == 0:
            if not np.all(np.isfinite(V)):
                bad = np.argwhere(~np.isfinite(V))[0]
                raise FloatingPointError(
                    f"non-finite value at t={n * dt:g}, a={a_nodes[bad[0]]:g}, i={inodes[bad[1]]:g}")
            values[n // per_rec] = V

    control = _control_gain(values, params, di) > 0
    control[:, 0, :] = False
    times = np.linspace(0.0, T, n_rec + 1)
    return HjbSolution(params=params, grid=grid, a_nodes=a_nodes, i_nodes=inodes, times=times,
                       value=values, control=control, dt=dt, n_steps=n_t, bound=bound)


def _check_in_grid(sol: HjbSolution, a, i, t):
    a, i, t = (np.asarray(v, dtype=float) for v in (a, i, t))
    tol = 1e-12
    if (np.any(a < sol.a_nodes[0] - tol) or np.any(a > sol.a_nodes[-1] + tol)
            or np.any(i < sol.i_nodes[0] - tol) or np.any(i > sol.i_nodes[-1] + tol)
            or np.any(t < -tol) or np.any(t > sol.times[-1] + tol)):
        raise ValueError("query outside the solution grid")
    return np.broadcast_arrays(a, i, t)


def value_at(sol: HjbSolution, a, i, t):
    """Multilinear interpolation of V in (t, log A, I)."""
    a, i, t = _check_in_grid(sol, a, i, t)
    interp = RegularGridInterpolator((sol.times, sol.x_nodes, sol.i_nodes), sol.value)
    x = np.clip(np.log(a), sol.x_nodes[0], sol.x_nodes[-1])
    pts = np.stack([np.clip(t, 0, sol.times[-1]), x, np.clip(i, 0, sol.i_nodes[-1])], axis=-1)
    out = interp(pts.reshape(-1, 3)).reshape(a.shape)
    return float(out) if out.ndim == 0 else out


def _nearest(nodes, v):
    k = np.searchsorted(nodes, v)
    k = np.clip(k, 1, len(nodes) - 1)
    left = nodes[k - 1]
    right = nodes[k]
    return np.where(v - left <= right - v, k - 1, k)


def optimal_control_at(sol: HjbSolution, a, i, t):
    """Bang-bang control (0 or u_max) at the nearest stored node."""
    a, i, t = _check_in_grid(sol, a, i, t)
    ka = _nearest(sol.x_nodes, np.log(np.maximum(a, sol.a_nodes[0])))
    ki = _nearest(sol.i_nodes, i)
    kt = _nearest(sol.times, t)
    out = np.where(sol.control[kt, ka, ki], sol.params.u_max, 0.0)
    return float(out) if out.ndim == 0 else out


def threshold_curve(sol: HjbSolution, t: float):
    """Switching information level for each autonomy row at time ``t``.

    Returns an array of (a, i*) rows. ``i*`` is the first information node at
    which the control drops from u_max to 0; rows that never provide report 0,
    rows that always provide report i_max.
    """
    if not 0 <= t <= sol.times[-1]:
        raise ValueError("t outside the horizon")
    ctrl = sol.control[int(_nearest(sol.times, np.asarray(t)))]
    out = np.empty((len(sol.a_nodes), 2))
    out[:, 0] = sol.a_nodes
    for r, row in enumerate(ctrl):
        if not row[0]:
            out[r, 1] = 0.0
        elif row.all():
            out[r, 1] = sol.i_nodes[-1]
        else:
            out[r, 1] = sol.i_nodes[np.argmin(row)]
    return out


def control_area_fraction(sol: HjbSolution) -> np.ndarray:
    """Share of the (A, I) grid where u = u_max, per stored time slice."""
    return sol.control.mean(axis=(1, 2))


def refinement_deltas(params: ModelParams, grid: GridSpec, probes=DEFAULT_PROBES,
                      factor: int = 2, coarse: HjbSolution | None = None) -> dict:
    """Relative change of V at probe points when n_a and n_i are multiplied by ``factor``."""
    probe_times = sorted({p[2] for p in probes} | {0.0, params.horizon})
    step = math.gcd(*[round(t * 1000) for t in probe_times if t > 0]) / 1000
    fine_grid = GridSpec(grid.a_range, grid.i_range, grid.n_a * factor, grid.n_i * factor,
                         None, step, grid.safety)
    if coarse is None:
        coarse = solve_hjb(params, grid)
    fine = solve_hjb(params, fine_grid)
    out = {}
    for a, i, t in probes:
        v0, v1 = value_at(coarse, a, i, t), value_at(fine, a, i, t)
        out[f"{a:g},{i:g},{t:g}"] = {"coarse": float(v0), "fine": float(v1),
                                     "rel_delta": abs(v1 - v0) / max(abs(v1), 1e-12)}
    return out


class HJBSolver(BaseEstimator):
    """Estimator wrapper: ``fit`` solves the HJB, ``predict`` returns controls.

    ``X`` rows passed to :meth:`predict` and :meth:`predict_value` are
    ``(a, i, t)`` states.

    >>> solver = HJBSolver(n_a=60, n_i=50).fit()            # doctest: +SKIP
    >>> solver.predict([[1.2, 0.5, 5.0]])                    # doctest: +SKIP
    array([1.])
    """

    def __init__(self, params=None, a_max=3.0, n_a=200, n_i=100, n_t=None,
                 record_dt=0.05, safety=0.9):
        self.params = params
        self.a_max = a_max
        self.n_a = n_a
        self.n_i = n_i
        self.n_t = n_t
        self.record_dt = record_dt
        self.safety = safety

    def _grid(self, params):
        return GridSpec.for_params(params, a_max=self.a_max, n_a=self.n_a, n_i=self.n_i,
                                   n_t=self.n_t, record_dt=self.record_dt, safety=self.safety)

    def fit(self, X=None, y=None):
        params = self.params if self.params is not None else get_preset("paper-2025")
        self.solution_ = solve_hjb(params, self._grid(params))
        return self

    def _states(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X, ensure_min_features=3)
        if X.shape[1] != 3:
            raise ValueError(f"expected 3 columns (a, i, t), got {X.shape[1]}")
        return X[:, 0], X[:, 1], X[:, 2]

    def predict(self, X):
        states = self._states(X)
        return np.atleast_1d(optimal_control_at(self.solution_, *states))

    def predict_value(self, X):
        states = self._states(X)
        return np.atleast_1d(value_at(self.solution_, *states))
