import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autonomy_lab import ModelParams, SimConfig, make_policy
from autonomy_lab.model import expected_hitting_time, mean_autonomy, variance_autonomy
from autonomy_lab.simulate import (draw_noise, exact_constant_i_sample, exact_ensemble, run_paths,
                                   simulate_ensemble, simulate_path)

P = ModelParams()


def pinned(level, params=P):
    return make_policy("constant_information", params, i_pin=level)


def test_exact_sample_examples():
    assert exact_constant_i_sample(10.0, 3, 0.0, P) == pytest.approx(math.exp(-1.6))
    assert exact_constant_i_sample(0.0, 3, 1.7, P) == P.a0


def test_exact_sampler_moments_large_n():
    z = np.random.default_rng(5).standard_normal(100_000)
    a = exact_constant_i_sample(10.0, 3, z, P)
    se_mean = a.std(ddof=1) / math.sqrt(a.size)
    assert abs(a.mean() - mean_autonomy(10.0, 3, P)) < 3 * se_mean
    a1 = exact_constant_i_sample(1.0, 1, z, P)
    # standard error of a sample variance from the fourth central moment
    dev = a1 - a1.mean()
    se_var = math.sqrt((np.mean(dev ** 4) - np.mean(dev ** 2) ** 2) / a1.size)
    assert abs(a1.var(ddof=1) - variance_autonomy(1.0, 1, P)) < 3 * se_var


def test_noiseless_path_is_deterministic_exponential():
    p = P.replace(sigma_a=0.0, sigma_i=0.0)
    path = simulate_path(make_policy("no_transparency", p), p, SimConfig(n_paths=1), 0)
    assert path.absorption is None
    assert np.allclose(path.a, np.exp(0.1 * path.t), rtol=1e-12)
    assert np.all(path.i == 0.0)


def test_noiseless_max_transparency_reaches_i_max():
    p = P.replace(sigma_a=0.0, sigma_i=0.0, mu0=0.5)  # keep autonomy away from the boundary
    path = simulate_path(make_policy("max_transparency", p), p, SimConfig(n_paths=1), 0)
    assert path.terminal[1] == pytest.approx(p.alpha0 * p.u_max * p.horizon)
    # u is the control applied over the following step; none is applied at the horizon
    assert np.all(path.samples[:-1, 3] == p.u_max) and path.samples[-1, 3] == 0.0


def test_path_invariants():
    cfg = SimConfig(n_paths=50, record_stride=1)
    pol = make_policy("max_transparency", P)
    for k in range(0, 50, 7):
        path = simulate_path(pol, P, cfg, k)
        assert np.all(path.a > 0)
        assert np.all((path.i >= 0) & (path.i <= P.i_max))
        assert np.all(np.diff(path.t) > 0)
        if path.absorption is not None:
            tau, step = path.absorption
            after = path.t >= tau
            assert np.all(path.a[after] <= P.boundary + 1e-12)
            assert path.t[step - 1] <= tau <= path.t[step] + 1e-12
    with pytest.raises(ValueError):
        simulate_path(pol, P, cfg, 50)


def test_positivity_with_large_steps():
    p = P.replace(sigma_a=2.0)
    cfg = SimConfig(dt=0.5, n_paths=200, boundary_enabled=False, record_stride=1)
    stats = simulate_ensemble(pinned(5.0), p, cfg)
    assert np.all(stats.batch.a > 0)


def test_control_out_of_range_is_an_error():
    class Bad:
        pinned_information = None

        def control(self, a, i, t):
            return np.full_like(a, 2.0)

    with pytest.raises(ValueError):
        simulate_ensemble(Bad(), P, SimConfig(n_paths=3))


def test_correlation_realisation():
    z = draw_noise(3, np.arange(1000), 1000).reshape(-1, 3)
    za = z[:, 0]
    zi = P.rho * za + math.sqrt(1 - P.rho ** 2) * z[:, 1]
    assert np.corrcoef(za, zi)[0, 1] == pytest.approx(P.rho, abs=0.01)


def test_determinism_and_layout_independence():
    pol = make_policy("max_transparency", P)
    base = SimConfig(n_paths=40, chunk_size=40)
    a = simulate_ensemble(pol, P, base)
    b = simulate_ensemble(pol, P, base.replace(chunk_size=7))
    c = simulate_ensemble(pol, P, base.replace(chunk_size=9, n_jobs=2))
    for other in (b, c):
        assert np.array_equal(a.batch.a, other.batch.a)
        assert np.array_equal(a.batch.tau, other.batch.tau, equal_nan=True)
        assert np.array_equal(a.discounted_reward, other.discounted_reward)
    # a single path reproduces its row of the ensemble
    p7 = simulate_path(pol, P, base, 7)
    assert np.array_equal(p7.a, a.batch.a[7])


def test_single_path_ensemble():
    pol = make_policy("max_transparency", P)
    cfg = SimConfig(n_paths=1)
    stats = simulate_ensemble(pol, P, cfg)
    path = simulate_path(pol, P, cfg, 0)
    assert np.array_equal(stats.mean_a, path.a)
    assert np.all(stats.var_a == 0)
    assert stats.absorption_fraction == (1.0 if path.absorption else 0.0)


def test_ensemble_means_match_mean_law_with_boundary_off():
    times = np.linspace(1, 10, 10)
    a = exact_ensemble(times, 3.0, P, 5000, 42)
    assert np.max(np.abs(a.mean(axis=0) / mean_autonomy(times, 3.0, P) - 1)) < 0.02


def test_log_scheme_matches_mean_law_with_boundary_off():
    cfg = SimConfig(n_paths=2000, boundary_enabled=False, bridge=False)
    stats = simulate_ensemble(pinned(3.0), P, cfg)
    theory = mean_autonomy(stats.times, 3.0, P)
    assert np.max(np.abs(stats.mean_a / theory - 1)) < 0.03


def test_variance_grows_with_boundary_off():
    cfg = SimConfig(n_paths=2000, boundary_enabled=False, record_stride=100)
    stats = simulate_ensemble(pinned(1.0), P, cfg)
    assert np.all(np.diff(stats.var_a) > 0)


def test_mean_absorption_time_at_i4():
    stats = simulate_ensemble(pinned(4.0), P.replace(horizon=30.0),
                              SimConfig(n_paths=5000, record_stride=10 ** 6))
    assert stats.absorption_fraction == 1.0
    assert stats.absorption_times.mean() == pytest.approx(2.49, abs=0.05)
    assert stats.absorption_times.mean() == pytest.approx(
        expected_hitting_time(1.0, 4, 4, P).value, abs=3 * stats.absorption_times.std() / math.sqrt(5000))


def test_time_step_convergence_with_coupled_noise():
    p = P.replace(horizon=30.0)
    n = 5000
    idx = np.arange(n)
    fine_cfg = SimConfig(dt=0.01, n_paths=n, record_stride=10 ** 6)
    fine_noise = draw_noise(42, idx, 3000)
    coarse_noise = np.empty((n, 1500, 3))
    coarse_noise[..., :2] = (fine_noise[:, 0::2, :2] + fine_noise[:, 1::2, :2]) / math.sqrt(2)
    coarse_noise[..., 2] = fine_noise[:, 0::2, 2]
    fine = run_paths(pinned(4.0), p, fine_cfg, idx, noise=fine_noise)
    coarse = run_paths(pinned(4.0), p, fine_cfg.replace(dt=0.02), idx, noise=coarse_noise)
    assert not np.isnan(fine.tau).any() and not np.isnan(coarse.tau).any()
    se = fine.tau.std(ddof=1) / math.sqrt(n)
    assert abs(fine.tau.mean() - coarse.tau.mean()) < se


def test_frozen_at_boundary_convention():
    stats = simulate_ensemble(pinned(5.0), P, SimConfig(n_paths=500, record_stride=50))
    absorbed = ~np.isnan(stats.batch.tau)
    assert np.all(stats.final_a[absorbed] == P.boundary)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32), level=st.floats(0.0, 5.0))
def test_pinned_information_stays_fixed(seed, level):
    stats = simulate_ensemble(pinned(level), P, SimConfig(n_paths=5, master_seed=seed, dt=0.1))
    assert np.all(stats.batch.i == level)
    assert 0.0 <= stats.absorption_fraction <= 1.0
    assert np.all(stats.var_a >= 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(n_paths=0)
    with pytest.raises(ValueError):
        SimConfig(scheme="milstein")
