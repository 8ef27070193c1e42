import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from levy_pv import kernel_bank as kb
from levy_pv.errors import (DivergentIntegralError, DivergentSeriesError, ParameterDomainError,
                            SingularKernelError, UnsupportedOrderError)
from levy_pv.kernel_bank import KernelSpec

# mpmath, 30 digits, analytic tail: int_0^inf |h_1(x)|^1.5 dx
HK1_L15_A025 = 1.85455392160747237
HK1_L15_A020 = 1.31366991784249512
# 10^6-term direct sum plus Euler-Maclaurin tail (mpmath): sum_l |h_1(l)|^2 at alpha=0.3
VM_A03_K1_P2 = 1.22366781202638
# same construction, alpha=0.2, k=2, p=1.5, U=0.5
VM_A02_K2_P15_U05 = 1.3865598891989415

GD = KernelSpec.gamma_damped(0.3, 0.5)


# ----------------------------------------------------------------- eval_g

def test_pure_power_value():
    assert kb.eval_g(KernelSpec.pure_power(0.5), 4.0) == pytest.approx(2.0, abs=1e-15)


def test_gamma_damped_first_derivative_zero():
    spec = KernelSpec.gamma_damped(1.0, 1.0)
    assert abs(kb.eval_g(spec, 1.0, 1)) < 1e-15
    t = np.linspace(0.1, 5, 20)
    np.testing.assert_allclose(kb.eval_g(spec, t, 1), (1 - t) * np.exp(-t), rtol=1e-13)


@pytest.mark.parametrize("t", [0.01, 0.3, 2.0])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_derivative_finite_difference(t, order):
    d = 1e-6 * max(t, 1.0) if order > 1 else 1e-7
    fd = (kb.eval_g(GD, t + d, order - 1) - kb.eval_g(GD, t - d, order - 1)) / (2 * d)
    assert fd == pytest.approx(kb.eval_g(GD, t, order), rel=1e-4)


def test_g_vanishes_left_of_zero():
    assert np.all(kb.eval_g(GD, np.array([-3.0, -1e-12]), 2) == 0.0)


def test_singularity_and_order_errors():
    with pytest.raises(SingularKernelError):
        kb.eval_g(GD, 0.0, 1)
    assert kb.eval_g(KernelSpec.gamma_damped(2.5, 1.0), 0.0, 2) == 0.0
    with pytest.raises(UnsupportedOrderError):
        kb.eval_g(GD, 1.0, GD.k_max + 1)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=0.5, c0=0.0), dict(alpha=0.5, lam=-1.0)])
def test_spec_domain(kw):
    with pytest.raises(ParameterDomainError):
        KernelSpec("gamma_damped", **kw)


def test_small_t_ratio():
    t = np.array([1e-4, 1e-8])
    r = kb.eval_g(GD, t) / (GD.c0 * t**GD.alpha)
    assert abs(r[1] - 1) < 1e-7


def test_spec_roundtrip():
    assert KernelSpec.from_dict(GD.to_dict()) == GD


# ----------------------------------------------------------------- h_k and D^k

def test_hk_examples():
    assert kb.h_k(0.7, 2, 1.0) == 1.0
    assert kb.h_k(0.5, 1, 4.0) == pytest.approx(2 - math.sqrt(3), rel=1e-14)
    assert abs(kb.h_k(2.0, 3, 10.0)) < 1e-12
    assert np.all(kb.h_k(0.4, 2, np.array([-1.0, 0.0])) == 0.0)


def test_hk_expansion_branch_continuity():
    # the direct sum and the large-x expansion meet at x = 8k
    for k in (1, 2, 3):
        x = 8.0 * k
        direct = sum(c * (x - j) ** 0.35 for j, c in enumerate(kb.binomial_coefficients(k)))
        assert kb.h_k(0.35, k, x + 1e-9) == pytest.approx(direct, rel=1e-9)


def test_difference_kernel_coefficients():
    dkern = kb.DifferenceKernel(4, 0.3)
    assert dkern.coefficients == (1, -4, 6, -4, 1)
    assert sum(dkern.coefficients) == 0
    assert dkern(2.5) == kb.h_k(0.3, 4, 2.5)
    with pytest.raises(ParameterDomainError):
        kb.DifferenceKernel(0)


def test_dk_apply_examples():
    assert kb.dk_apply(lambda x: 3.0 + 0 * x, 3, 1.7) == 0.0
    assert kb.dk_apply(lambda x: x, 1, 7.0) == 1.0
    x = np.linspace(-1, 12, 100)
    np.testing.assert_allclose(kb.dk_apply(lambda y: np.maximum(y, 0) ** 0.6, 3, x),
                               kb.h_k(0.6, 3, x), rtol=0, atol=1e-12)


@given(st.integers(1, 5), st.floats(5.0, 50.0), st.lists(st.floats(-2, 2), min_size=1, max_size=5))
def test_dk_annihilates_low_degree(k, x, coef):
    coef = coef[:k]
    poly = lambda y: np.polynomial.polynomial.polyval(y, coef)
    scale = max(1.0, sum(abs(c) * x**j for j, c in enumerate(coef)))
    assert abs(kb.dk_apply(poly, k, x)) < 1e-10 * scale


@pytest.mark.parametrize("k,alpha", [(1, 0.3), (2, 0.7), (3, 1.4)])
def test_hk_tail_bound(k, alpha):
    grid = np.geomspace(k + 1, 1e4, 400)
    ratio = np.abs(kb.h_k(alpha, k, grid)) * grid ** (k - alpha)
    bound = 1.05 * ratio.max()
    xs = np.random.default_rng(k).uniform(k + 1, 1e4, 1000)
    assert np.all(np.abs(kb.h_k(alpha, k, xs)) * xs ** (k - alpha) <= bound)
    k_alpha, _ = kb.hk_expansion(alpha, k)
    assert ratio[-1] == pytest.approx(abs(k_alpha), rel=1e-3)


# ----------------------------------------------------------------- scaled kernel

def test_scaled_kernel_examples():
    pp = KernelSpec.pure_power(0.4)
    assert abs(kb.scaled_kernel_phi_n(pp, 2**14, 1.0, 0.5) - kb.h_k(0.4, 1, 0.5)) < 1e-3
    assert kb.scaled_kernel_phi_n(GD, 64, 1.0, 2.0) == 0.0
    for x in (0.3, 2.5, 9.0, 40.0):
        direct = kb.dk_apply(lambda y: kb.eval_g(GD, y), 2, x)
        assert kb.scaled_kernel_phi_n(GD, 1, x, 0.0, k=2) == direct


def test_scaled_kernel_damped_converges():
    u = 0.5
    diffs = [abs(kb.scaled_kernel_phi_n(GD, n, 1.0, 1.0 - u) - kb.h_k(0.3, 1, u)) for n in (16, 256, 2**14)]
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-3


@pytest.mark.parametrize("x", [9.0, 30.0, 500.0])
def test_scaled_kernel_far_branch(x):
    # B-spline smoothing branch vs direct alternating sum at moderate n
    n = 64
    direct = kb.dk_apply(lambda y: n**GD.alpha * kb.eval_g(GD, y / n), 2, x)
    assert kb.scaled_kernel_phi_n(GD, n, x, 0.0, k=2) == pytest.approx(direct, rel=1e-7)


# ----------------------------------------------------------------- L^beta norms

def test_lbeta_indicator():
    f = lambda x: 1.0 if 0 <= x <= 1 else 0.0
    for beta in (0.5, 1.0, 1.7):
        assert kb.lbeta_norm(f, beta, (0.0, 1.0)) == pytest.approx(1.0, rel=1e-12)


def test_lbeta_divergent_plateau():
    with pytest.raises(DivergentIntegralError):
        kb.lbeta_norm(lambda x: kb.h_k(1.0, 1, x), 1.0, (0.0, np.inf))
    with pytest.raises(DivergentIntegralError):
        kb.hk_lbeta_integral(1.0, 1, 1.0)


def _riemann_hk1(alpha, beta):
    # midpoint sum on [0, 200] with mesh 1e-4, then the leading-order tail
    mesh = 1e-4
    x = (np.arange(int(200 / mesh)) + 0.5) * mesh
    head = np.sum(np.abs(kb.h_k(alpha, 1, x)) ** beta) * mesh
    f = lambda y: abs(kb.h_k(alpha, 1, y)) ** beta
    tail, _ = integrate.quad(f, 200.0, np.inf, limit=400)
    return head + tail


@pytest.mark.parametrize("alpha,frozen", [(0.25, HK1_L15_A025), (0.2, HK1_L15_A020)])
def test_lbeta_hk_oracles(alpha, frozen):
    adaptive = kb.lbeta_norm(lambda x: kb.h_k(alpha, 1, x), 1.5, (0.0, np.inf), tol=1e-10, points=[1.0],
                             tail_exponent=alpha - 1)
    series = kb.hk_lbeta_integral(alpha, 1, 1.5)
    assert adaptive == pytest.approx(_riemann_hk1(alpha, 1.5), rel=1e-4)
    assert adaptive == pytest.approx(frozen, rel=1e-8)
    assert series == pytest.approx(frozen, rel=1e-12)


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.5, 1.9))
def test_lbeta_additive(b, width, beta):
    f = lambda x: kb.h_k(0.4, 2, x)
    c = b + width
    tol = 1e-9
    left = kb.lbeta_norm(f, beta, (0.0, b), tol=tol, points=[1.0, 2.0])
    right = kb.lbeta_norm(f, beta, (b, c), tol=tol, points=[1.0, 2.0])
    whole = kb.lbeta_norm(f, beta, (0.0, c), tol=tol, points=[1.0, 2.0, b])
    assert abs(left + right - whole) <= 2 * tol * whole + 1e-13


def test_lbeta_domain_errors():
    with pytest.raises(ParameterDomainError):
        kb.lbeta_norm(abs, 0.0, (0, 1))
    with pytest.raises(ParameterDomainError):
        kb.lbeta_norm(abs, 1.0, (1, 1))


# ----------------------------------------------------------------- vm_series

def test_vm_series_brute_force():
    n_terms = 10**6
    l = np.arange(2, n_terms + 1, dtype=float)
    # l^a - (l-1)^a without cancellation
    diff = -np.exp(0.3 * np.log(l)) * np.expm1(0.3 * np.log1p(-1.0 / l))
    head = 1.0 + np.sum(diff**2)
    f = lambda x: (np.exp(0.3 * np.log(x)) * np.expm1(0.3 * np.log1p(-1.0 / x))) ** 2
    X = n_terms + 1.0
    tail, _ = integrate.quad(lambda t: f(X * np.exp(t)) * X * np.exp(t), 0.0, 200.0, limit=200, epsrel=1e-12)
    tail += 0.5 * f(X)  # Euler-Maclaurin, next term is O(X^-2.4)
    assert kb.vm_series(0.3, 1, 2.0, 0.0, tol=1e-8) == pytest.approx(head + tail, abs=1e-8)
    assert kb.vm_series(0.3, 1, 2.0, 0.0) == pytest.approx(VM_A03_K1_P2, abs=1e-12)


def test_vm_series_second_oracle():
    assert kb.vm_series(0.2, 2, 1.5, 0.5) == pytest.approx(VM_A02_K2_P15_U05, abs=1e-10)


def test_vm_series_continuity_at_zero_smooth_case():
    assert abs(kb.vm_series(1.2, 3, 0.8, 1e-9) - kb.vm_series(1.2, 3, 0.8, 0.0)) < 1e-6


@pytest.mark.parametrize("alpha,k,p", [(0.3, 1, 2.0), (0.6, 2, 1.0), (1.2, 3, 0.8)])
def test_vm_series_continuity_modulus(alpha, k, p):
    # the terms near x = 0..k move like U^(alpha min(p, 1))
    base = kb.vm_series(alpha, k, p, 0.0)
    us = np.array([1e-3, 1e-6, 1e-9, 1e-12])
    diffs = np.abs(kb.vm_series(alpha, k, p, us) - base)
    assert np.all(np.diff(diffs) < 0)
    assert np.all(diffs <= 2**k * max(p, 1.0) * us ** (alpha * min(p, 1.0)))


def test_vm_series_vectorised():
    u = np.array([0.0, 0.25, 0.9])
    np.testing.assert_allclose(kb.vm_series(0.3, 1, 2.0, u), [kb.vm_series(0.3, 1, 2.0, v) for v in u])


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_vm_series_divergent(alpha):
    with pytest.raises(DivergentSeriesError):
        kb.vm_series(alpha, 1, 1.0, 0.0)
    with pytest.raises(ParameterDomainError):
        kb.vm_series(0.3, 1, 2.0, 1.0)


# ----------------------------------------------------------------- near and far kernel bounds

@pytest.mark.parametrize("spec,k", [(GD, 1), (KernelSpec.gamma_damped(0.4, 1.0), 2),
                                    (KernelSpec.gamma_damped(1.2, 1.0), 2), (KernelSpec.pure_power(0.7), 2)])
def test_lemma_bounds_random(spec, k):
    # alpha < k throughout: for alpha > k the far bound vanishes at y = k/n
    K = kb.fit_bound_constant(spec, k)
    rng = np.random.default_rng(41)
    for _ in range(1000):
        n = int(rng.integers(8, 4097))
        i = int(rng.integers(k, 10 * n))
        if rng.random() < 0.5:
            x = (i - k * rng.random()) / n
            y = i / n - x
            assert abs(kb.g_in(spec, i, n, k, x)) <= K * y**spec.alpha * (1 + 1e-9)
        else:
            y = k / n + (1 - k / n) * rng.random() ** 3
            x = i / n - y
            bound = K * n ** (-k) * ((i - k) / n - x) ** (spec.alpha - k)
            assert abs(kb.g_in(spec, i, n, k, x)) <= bound * (1 + 1e-9)


# ----------------------------------------------------------------- Assumption (A)

def test_assumption_gamma_damped_passes():
    rep = kb.validate_assumption_A(KernelSpec.gamma_damped(0.4, 1.0), 1.5, 2)
    assert rep.passed, rep.failures()


def test_assumption_pure_power_fails_d():
    rep = kb.validate_assumption_A(KernelSpec.pure_power(0.4), 1.5, 1)
    assert rep.failures() == ["d"]


def test_assumption_smooth_kernel_c():
    rep = kb.validate_assumption_A(KernelSpec.gamma_damped(2.5, 1.0), 1.5, 2)
    assert rep.clause("c").passed and rep.K > 0


def test_assumption_log_clause():
    rep = kb.validate_assumption_A(KernelSpec.gamma_damped(0.4, 1.0), 1.0, 2)
    assert rep.clause("e").passed and rep.a_log_finite


def test_best_theta():
    # |g'|^theta ~ t^(-0.6 theta) is integrable at infinity iff theta > 5/3
    assert kb.best_theta(KernelSpec.pure_power(0.4), 1) == 1.7
    assert kb.best_theta(KernelSpec.gamma_damped(0.4, 1.0), 1) == 0.05
