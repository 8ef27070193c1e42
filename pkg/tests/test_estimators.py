import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from levy_pv import estimators as est
from levy_pv import path_simulator as ps
from levy_pv.errors import EstimationError, ParameterDomainError
from levy_pv.levy_driver import RngStream


@pytest.mark.parametrize("alpha,beta,p,expected", [
    (0.2, 1.5, 1.2, 1.2 * (0.2 + 1 / 1.5) - 1),
    (0.2, 1.5, 1.8, 0.36),
    (0.45, 1.9, 1.5, 1.5 * (0.45 + 1 / 1.9) - 1),
    (0.1, 1.2, 1.3, 0.13),
])
def test_scale_function_examples(alpha, beta, p, expected):
    assert est.theoretical_scale_function(alpha, beta, p) == pytest.approx(expected, abs=1e-15)


def test_scale_function_domain():
    with pytest.raises(ParameterDomainError):
        est.theoretical_scale_function(0.6, 1.2, 1.5)      # H > 1
    with pytest.raises(ParameterDomainError):
        est.theoretical_scale_function(0.2, 1.5, 2.0)


@given(st.floats(0.5 + 1e-3, 1 - 1e-3), st.floats(0.0, 1.0))
def test_scale_function_continuous_in_p(b, frac):
    a = max(frac * (1 - b), 1e-3)
    assume(a + b < 1)
    p = np.linspace(1.001, 1.999, 2000)
    s = est.theoretical_scale_function(a, 1 / b, p)
    # piecewise linear with slopes in [0, 1]
    assert np.max(np.abs(np.diff(s))) < np.max(np.diff(p)) * (1 + 1e-9)


@pytest.mark.parametrize("alpha,beta", [(0.2, 1.5), (0.05, 1.9), (0.35, 1.6), (0.1, 1.2)])
def test_exact_curve_recovery(alpha, beta):
    p = est.default_p_grid()
    res = est.fit_scale_curve(p, est.theoretical_scale_function(alpha, beta, p))
    assert res.alpha_hat == pytest.approx(alpha, abs=1e-6)
    assert res.beta_hat == pytest.approx(beta, abs=1e-6)
    assert res.objective_value < 1e-12


def test_objective_log_monotone():
    p = est.default_p_grid()
    res = est.fit_scale_curve(p, est.theoretical_scale_function(0.2, 1.5, p) + 0.01 * np.sin(7 * p))
    log = res.diagnostics["objective_log"]
    assert all(b <= a for a, b in zip(log, log[1:]))


@given(st.lists(st.floats(-1, 2), min_size=33, max_size=33))
def test_fit_always_feasible(s):
    res = est.fit_scale_curve(est.default_p_grid(), np.array(s), est.OptimizerConfig(grid_size=11, max_iter=40))
    assert res.alpha_hat > 0 and 1 < res.beta_hat < 2
    assert 0.5 < res.alpha_hat + 1 / res.beta_hat < 1
    assert res.H_hat == pytest.approx(res.alpha_hat + 1 / res.beta_hat, rel=1e-12)


def test_fit_errors():
    with pytest.raises(ParameterDomainError):
        est.fit_scale_curve(np.linspace(1.1, 1.9, 5), np.zeros(5))
    with pytest.raises(EstimationError):
        est.scale_function_fit(np.full(257, 4.0))
    with pytest.raises(ParameterDomainError):
        est.scale_function_fit(np.arange(10.0), p_grid=np.linspace(0.5, 1.5, 9))


def test_trapezoid_weights():
    w = est.trapezoid_weights([1.0, 1.5, 2.0, 3.0])
    np.testing.assert_allclose(w, [0.25, 0.5, 0.75, 0.5])


def test_estimate_H_linear_and_invariance():
    n = 2**12
    x = np.arange(n + 1) / n
    assert est.estimate_H_ratio(x, 0.5) == pytest.approx(1.0 + math.log1p(-1 / n) / (0.5 * math.log(2)), rel=1e-12)
    path = ps.lfsm_batch(0.25, 1.6, 1.0, ps.SimConfig(2**10, stream=RngStream(70)), [0])[0]
    assert est.estimate_H_ratio(5 * path + 3, 0.5) == pytest.approx(est.estimate_H_ratio(path, 0.5), rel=1e-12)


def test_result_json_roundtrip():
    p = est.default_p_grid()
    res = est.fit_scale_curve(p, est.theoretical_scale_function(0.2, 1.5, p))
    d = res.to_dict()
    assert d["schema_version"] == 1 and len(d["p_grid"]) == 33


def test_scale_fit_on_lfsm_smoke():
    # the 100-replication recovery study lives in the acceptance suite
    path = ps.lfsm_batch(0.2, 1.5, 1.0, ps.SimConfig(2**14, stream=RngStream(71)), [0])[0]
    res = est.scale_function_fit(path)
    assert abs(res.H_hat - (0.2 + 1 / 1.5)) < 0.1
