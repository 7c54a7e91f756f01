import numpy as np
import pytest

from autonomy_lab import ModelParams, SimConfig, compare_policies, evaluate_policy, make_policy
from autonomy_lab.policies import QUALITY_METRIC, parse_policy

P = ModelParams()
CFG = SimConfig(n_paths=1000, master_seed=42)


def test_fixed_policies():
    a = np.linspace(0.5, 3.0, 7)
    i = np.linspace(0.0, 5.0, 7)
    assert np.all(make_policy("no_transparency", P).control(a, i, 3.0) == 0.0)
    assert np.all(make_policy("max_transparency", P).control(a, i, 3.0) == P.u_max)


def test_optimal_policy_example(default_solution):
    pol = make_policy("optimal", P, default_solution)
    assert pol.predict([[1.2, 0.5, 5.0]]).tolist() == [P.u_max]
    u = pol.control(np.linspace(0.5, 3, 50), np.linspace(0, 5, 50), 2.0)
    assert set(np.unique(u)) <= {0.0, P.u_max}


def test_incompatible_solution_rejected(default_solution):
    with pytest.raises(ValueError):
        make_policy("optimal", P.replace(kappa=1.0), default_solution)
    with pytest.raises(ValueError):
        make_policy("optimal", P)
    with pytest.raises(ValueError):
        make_policy("constant_information", P, i_pin=7.0)
    with pytest.raises(ValueError):
        make_policy("sometimes", P)


def test_parse_policy():
    assert parse_policy("none", P).kind == "no_transparency"
    assert parse_policy("max", P).kind == "max_transparency"
    pol = parse_policy("constant:4", P)
    assert pol.pinned_information == 4.0 and pol.label == "constant:4"
    with pytest.raises(ValueError):
        pol.control(np.ones(2), np.ones(2), 0.0)


def test_no_transparency_has_zero_quality():
    p = P.replace(sigma_i=0.0)
    rep = evaluate_policy(make_policy("no_transparency", p), p, CFG.replace(n_paths=200))
    assert rep.mean_quality == 0.0
    assert rep.quality_metric == QUALITY_METRIC


def test_disengagement_bands():
    mx = evaluate_policy(make_policy("max_transparency", P), P, CFG)
    no = evaluate_policy(make_policy("no_transparency", P), P, CFG)
    assert mx.disengagement_probability > 0.80
    assert no.disengagement_probability < 0.20
    for r in (mx, no):
        assert 0.0 <= r.disengagement_probability <= 1.0
        assert r.n_paths == 1000 and r.seed == 42


def test_report_reproducible():
    pol = make_policy("max_transparency", P)
    cfg = CFG.replace(n_paths=100)
    assert evaluate_policy(pol, P, cfg).to_dict() == evaluate_policy(pol, P, cfg).to_dict()


def test_comparison_orderings(default_solution):
    rep = compare_policies(P, CFG, default_solution)
    assert rep.passed, rep.checks
    assert set(rep.mean_autonomy) == {"optimal", "max_transparency", "no_transparency"}
    assert len(rep.times) == len(rep.mean_autonomy["optimal"])
    d = rep.to_dict()
    assert d["passed"] and d["quality_metric"] == QUALITY_METRIC


def test_comparison_reports_failed_orderings(default_solution):
    # a degenerate run where nothing disengages cannot satisfy the strict orderings
    rep = compare_policies(P, CFG.replace(n_paths=20, boundary_enabled=False), default_solution)
    assert not rep.checks["disengagement_max>optimal>none"]
    assert not rep.passed
