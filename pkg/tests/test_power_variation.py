import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from levy_pv import kernel_bank as kb
from levy_pv import limit_laws as ll
from levy_pv import path_simulator as ps
from levy_pv import power_variation as pv
from levy_pv.errors import DegeneratePathError, ParameterDomainError, SizeError, UnsupportedRegimeError
from levy_pv.levy_driver import RngStream

paths = arrays(np.float64, st.integers(4, 60), elements=st.floats(-1e3, 1e3))


def test_kth_increments_examples():
    np.testing.assert_array_equal(pv.kth_increments([0.0, 1.0, 3.0], 1), [1.0, 2.0])
    n = 50
    assert np.all(pv.kth_increments(np.arange(n + 1) / n, 2) == pytest.approx(0.0, abs=1e-15))
    np.testing.assert_array_equal(pv.kth_increments([0.0, 1.0, 4.0, 9.0], 2), [2.0, 2.0])
    assert pv.kth_increments(np.zeros(11), 3).size == 8


def test_kth_increments_size_error():
    with pytest.raises(SizeError):
        pv.kth_increments([1.0, 2.0], 2)
    with pytest.raises(ParameterDomainError):
        pv.kth_increments([1.0, 2.0, 3.0], 0)


def test_power_variation_examples():
    assert pv.power_variation(np.full(20, 3.3), 2.0).raw == 0.0
    n = 256
    for p in (0.5, 1.0, 1.5):
        assert pv.power_variation(np.arange(n + 1) / n, p).raw == pytest.approx(n ** (1 - p), rel=1e-12)
    assert pv.power_variation([0.0, 1.0, -1.0], 2.0).raw == 5.0
    with pytest.raises(ParameterDomainError):
        pv.power_variation([0.0, 1.0], 0.0)


def test_abs_pow_tiny_values():
    x = np.array([0.0, 1e-300, -2.0])
    out = pv.abs_pow(x, 0.3)
    assert out[0] == 0.0 and out[1] > 0.0
    assert out[2] == pytest.approx(2.0**0.3, rel=1e-15)


def test_compensated_sum():
    # 10^6 heavy-tailed terms against an exactly rounded reference
    inc = np.random.default_rng(2).pareto(1.2, 10**6)
    x = np.concatenate([[0.0], np.cumsum(inc)])
    terms = pv.abs_pow(np.diff(x), 0.7)
    assert pv.power_variation(x, 0.7).raw == pytest.approx(math.fsum(terms), rel=1e-13)


def test_normalize_examples():
    res = pv.PowerVariationResult(2.0, 2.0, 1.0, 1, 1024)
    out = pv.normalize(res, "Thm1ii", 0.2, 1.5)
    assert out.normalization_exponent == pytest.approx(-1 + 0.2 + 2 / 3, abs=1e-15)
    assert out.normalized == pytest.approx(2.0 * 1024 ** (-0.13333333333333333), rel=1e-14)
    r3 = pv.normalize(pv.PowerVariationResult(3.0, 3.0, 2.0, 1, 100), "Thm1iii", 1.2, 1.5)
    assert r3.normalized == pytest.approx(300.0, rel=1e-14)
    # alpha = 0.5 = k - 1/p is critical for classify_regime; the factor itself is pure arithmetic
    r1 = pv.normalize(pv.PowerVariationResult(1.5, 1.5, 2.0, 1, 256), "Thm1i", 0.5, 1.5)
    assert r1.normalized == pytest.approx(1.5 * 256, rel=1e-14) and r1.regime == "Thm1i"


@pytest.mark.parametrize("args", [(0.2, 1.5, 1.5, 1), (1 / 3, 1.5, 1.0, 1)])
def test_normalize_critical(args):
    alpha, beta, p, k = args
    rep = ll.classify_regime(alpha, beta, p, k)
    with pytest.raises(UnsupportedRegimeError):
        pv.normalize(pv.PowerVariationResult(1.0, 1.0, p, k, 64), rep, alpha, beta)


@given(paths, st.floats(0.2, 3.0), st.sampled_from(["Thm1i", "Thm1ii", "Thm1iii"]))
def test_normalize_recoverable(x, p, regime):
    res = pv.power_variation(x, p, 1)
    out = pv.normalize(res, regime, 0.3, 1.7)
    assert out.raw == res.raw
    if res.raw > 0:
        back = out.normalized * float(out.n) ** (-out.normalization_exponent)
        assert back == pytest.approx(res.raw, rel=1e-13)


@given(paths, st.floats(0.2, 3.0), st.integers(1, 3), st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
def test_power_variation_scaling(x, p, k, c):
    a = pv.power_variation(c * x, p, k).raw
    b = abs(c) ** p * pv.power_variation(x, p, k).raw
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(paths, st.floats(0.2, 3.0), st.integers(1, 3), st.integers(-1000, 1000))
def test_shift_invariance(x, p, k, shift):
    # integer shifts keep the floating-point differences exact
    x = np.round(x)
    assert pv.power_variation(x + shift, p, k).raw == pv.power_variation(x, p, k).raw


@given(st.integers(1, 5), st.integers(8, 80), st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_polynomial_annihilation(k, n, coef):
    t = np.arange(n + 1) / n
    x = np.polynomial.polynomial.polyval(t, coef[:k])
    assert np.max(np.abs(pv.kth_increments(x, k))) < 1e-10


# ----------------------------------------------------------------- ratio and scale statistics

def test_ratio_linear_path():
    n = 1000
    R, H = pv.ratio_statistic(np.arange(n + 1) / n, 0.5)
    assert R == pytest.approx((n - 1) * (2 / n) ** 0.5 / (n * (1 / n) ** 0.5), rel=1e-12)
    assert H == pytest.approx(1.0 + math.log1p(-1 / n) / (0.5 * math.log(2)), rel=1e-12)


def test_ratio_degenerate():
    with pytest.raises(DegeneratePathError):
        pv.ratio_statistic([0.0, 1.0, 0.0], 0.5)
    with pytest.raises(DegeneratePathError):
        pv.ratio_statistic(np.ones(10), 0.5)
    with pytest.raises(ParameterDomainError):
        pv.ratio_statistic(np.arange(10.0), 1.5)


# grid-valued paths: increments far below the shift would round away in c * x + shift
@given(arrays(np.float64, st.integers(5, 40), elements=st.integers(-10**5, 10**5).map(lambda v: v / 1000)),
       st.floats(0.1, 1.0), st.floats(0.01, 100), st.floats(-50, 50))
def test_ratio_invariance(x, p, c, shift):
    try:
        R, _ = pv.ratio_statistic(x, p)
    except DegeneratePathError:
        return
    assert pv.ratio_statistic(c * x + shift, p)[0] == pytest.approx(R, rel=1e-9)


def test_ratio_estimates_H_on_lfsm():
    X = ps.lfsm_batch(0.25, 1.6, 1.0, ps.SimConfig(2**14, stream=RngStream(50)), range(200))
    H = np.median([pv.ratio_statistic(x, 0.5)[1] for x in X])
    assert abs(H - 0.875) < 0.02


def test_log_scale_examples():
    n = 512
    assert pv.log_scale_statistic(np.arange(n + 1) / n, 1.5) == pytest.approx(0.5, rel=1e-12)
    assert pv.log_scale_statistic([0.0, 1.0, 1.0], 1.5) == 0.0
    with pytest.raises(DegeneratePathError):
        pv.log_scale_statistic(np.zeros(5), 1.0)


def test_log_scale_on_lfsm():
    # S = pH - 1 - log(m_p)/log(n) + o(1/log n); the correction is 0.12 here
    alpha, beta, p, n = 0.2, 1.5, 1.2, 2**14
    X = ps.lfsm_batch(alpha, beta, 1.0, ps.SimConfig(n, stream=RngStream(51)), range(200))
    S = np.median([pv.log_scale_statistic(x, p) for x in X])
    target = p * (alpha + 1 / beta) - 1
    shift = math.log(ll.m_p(alpha, beta, 1.0, p, 1)) / math.log(n)
    assert abs(S + shift - target) < 0.05


# ----------------------------------------------------------------- eta^2

def test_eta2_iid_input():
    Y = ps.simulate_scaled_increments(kb.KernelSpec.pure_power(0.3), 1.8, 1.0, 2**14, 2,
                                      ps.SimConfig(2**14, stream=RngStream(53)))
    f = pv.abs_pow(Y, 0.6)
    shuffled = np.random.default_rng(3).permutation(Y)
    L = 25
    e = pv.empirical_eta2(shuffled, 0.6, L)
    var = pv.empirical_eta2(shuffled, 0.6, 0)
    assert var == pytest.approx(np.var(f), rel=1e-12)
    # each biased autocovariance of i.i.d. data has SE ~ var / sqrt(N)
    assert abs(e - var) < 3 * 2 * math.sqrt(L) * var / math.sqrt(f.size)


def test_eta2_constant_and_size():
    assert pv.empirical_eta2(np.full(100, 2.0), 0.6, 10) == 0.0
    with pytest.raises(SizeError):
        pv.empirical_eta2(np.arange(10.0), 0.6, 10)
    assert pv.default_lag_cutoff(2**12) == 16
    assert pv.default_lag_cutoff(1000) == 10


def test_eta2_cutoff_stability():
    # averaged over 40 paths: single-path estimates are too noisy (E|Y|^{4p} is infinite)
    Y = ps.scaled_increments_batch(kb.KernelSpec.pure_power(0.1), 1.8, 1.0, 2, ps.SimConfig(2**14, stream=RngStream(52)),
                                   range(40))
    m = np.mean([[pv.empirical_eta2(y, 0.6, L) for L in (32, 64, 128)] for y in Y], axis=0)
    assert m.max() / m.min() - 1 < 0.05


def test_eta2_band():
    Y = np.random.default_rng(1).standard_normal(1000)
    band = pv.eta2_band(Y, 1.0)
    assert sorted(band["values"]) == [5, 10, 20]
    assert band["min"] <= band["values"][10] <= band["max"]
