import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from levy_pv import levy_driver as ld
from levy_pv.errors import ParameterDomainError
from levy_pv.levy_driver import JumpLaw, LevySpec, RngStream

from conftest import mc_se

# mpmath, 30 digits: exp(-0.7^1.5)
CF_STABLE_15_07 = 0.556737169438117283
# mpmath, 30 digits: 2 C int (cos(0.5 x) - 1) nu(dx) for the tempered beta=1.2, cutoff=1 density
TEMPERED_PSI_12_05 = -0.171414788164994396


def test_gaussian_special_case():
    x = ld.sample_symmetric_stable(2.0, 1.0, 10**6, RngStream(1))
    assert abs(np.var(x) / 2.0 - 1.0) < 0.01


def test_cauchy_quartiles():
    x = ld.sample_symmetric_stable(1.0, 1.0, 10**6, RngStream(2))
    q1, q3 = np.quantile(x, [0.25, 0.75])
    assert abs(q1 + 1.0) < 0.02 and abs(q3 - 1.0) < 0.02


def test_stable_characteristic_function():
    x = ld.sample_symmetric_stable(1.5, 1.0, 10**6, RngStream(3))
    c = np.cos(0.7 * x)
    assert abs(c.mean() - CF_STABLE_15_07) < 3 * mc_se(c)


@pytest.mark.parametrize("beta,sigma", [(0.0, 1.0), (2.5, 1.0), (1.5, 0.0), (1.5, -1.0)])
def test_stable_domain_errors(beta, sigma):
    with pytest.raises(ParameterDomainError):
        ld.sample_symmetric_stable(beta, sigma, 10, 0)


@pytest.mark.parametrize("rho", [1.1, 1.5, 1.9])
def test_skewed_stable_characteristic_function(rho):
    x = ld.sample_totally_skewed_stable(rho, 1.0, 10**6, RngStream(4))
    t = np.array([-0.7, 0.3, 1.0, 2.0])
    emp = np.array([np.mean(np.exp(1j * ti * x)) for ti in t])
    ana = np.exp(-np.abs(t) ** rho * (1 - 1j * np.sign(t) * math.tan(math.pi * rho / 2)))
    assert np.max(np.abs(emp - ana)) < 4e-3


# rho = 1.1 is left to the cf test: its sample mean converges like n^(1/rho - 1)
@pytest.mark.parametrize("rho", [1.5, 1.9])
def test_skewed_stable_mean_zero(rho):
    x = ld.sample_totally_skewed_stable(rho, 1.0, 10**6, RngStream(4, int(rho * 10)))
    means = x.reshape(100, -1).mean(axis=1)
    assert abs(x.mean()) < 3 * means.std(ddof=1) / 10.0


def test_skewed_stable_right_tail():
    from levy_pv.mc_harness import hill_tail_index
    x = ld.sample_totally_skewed_stable(1.5, 1.0, 10**6, RngStream(5))
    assert np.mean(x > 10.0) > 5 * np.mean(x < -10.0)
    h = hill_tail_index(x, 0.01)
    assert abs(h.index - 1.5) < 0.1


def test_skewed_stable_scaling():
    a = ld.sample_totally_skewed_stable(1.9, 2.0, 10**5, RngStream(6))
    b = 2.0 * ld.sample_totally_skewed_stable(1.9, 1.0, 10**5, RngStream(7))
    assert stats.ks_2samp(a, b).statistic < 0.01


@pytest.mark.parametrize("rho", [1.0, 2.0, 0.5])
def test_skewed_stable_domain(rho):
    with pytest.raises(ParameterDomainError):
        ld.sample_totally_skewed_stable(rho, 1.0, 10, 0)


def test_compound_poisson_counts():
    spec = LevySpec.compound_poisson(2.0)
    _, counts = ld.sample_levy_increments(spec, 0.5, 10**6, RngStream(8), return_counts=True)
    assert abs(counts.mean() - 1.0) < 0.01


def test_stable_increment_self_similarity():
    spec = LevySpec.stable(1.5)
    a = ld.sample_levy_increments(spec, 1.0 / 1024, 10**5, RngStream(9))
    b = 1024 ** (-2.0 / 3.0) * ld.sample_levy_increments(spec, 1.0, 10**5, RngStream(10))
    assert stats.ks_2samp(a, b).statistic < 1.36 * math.sqrt(2.0 / 10**5)


def test_tempered_exponent_matches_oracle():
    spec = LevySpec.tempered(1.2, 1.0, 1.0)
    assert ld.characteristic_exponent(spec, 0.5) == pytest.approx(TEMPERED_PSI_12_05, rel=1e-7)


def test_tempered_characteristic_function_mc():
    spec = LevySpec.tempered(1.2, 1.0, 1.0)
    x = ld.sample_levy_increments(spec, 1.0, 2 * 10**5, RngStream(11))
    c = np.cos(0.5 * x)
    assert abs(c.mean() - math.exp(TEMPERED_PSI_12_05)) < 3 * mc_se(c)


def test_increment_domain():
    with pytest.raises(ParameterDomainError):
        ld.sample_levy_increments(LevySpec.stable(1.5), 0.0, 10, 0)


def test_poisson_jump_count():
    counts = [len(ld.sample_compound_poisson_jumps(3.0, JumpLaw.UNIT, (0.0, 1.0), RngStream(12, i)))
              for i in range(4000)]
    assert abs(np.mean(counts) - 3.0) < 3 * math.sqrt(3.0 / 4000)
    assert abs(np.var(counts) - 3.0) < 0.3


def test_jump_times_conditionally_uniform():
    times = np.concatenate([ld.sample_compound_poisson_jumps(1.0, JumpLaw.UNIT, (-5.0, 1.0), RngStream(13, i)).times
                            for i in range(10**4)])
    assert abs(times.size / 10**4 - 6.0) < 0.1
    p = stats.kstest(times, stats.uniform(loc=-5.0, scale=6.0).cdf).pvalue
    assert p > 0.01


def test_pareto_jumps_symmetric():
    jl = ld.sample_compound_poisson_jumps(2.0, (JumpLaw.PARETO, 2.5), (0.0, 10**5 / 2.0), RngStream(14))
    assert abs(jl.sizes.mean()) < 3 * mc_se(jl.sizes)


def test_jumps_sorted_and_window_error():
    jl = ld.sample_compound_poisson_jumps(5.0, JumpLaw.NORMAL, (-3.0, 2.0), RngStream(15))
    assert np.all(np.diff(jl.times) >= 0)
    assert jl.times.min() >= -3.0 and jl.times.max() <= 2.0
    with pytest.raises(ParameterDomainError):
        ld.sample_compound_poisson_jumps(1.0, JumpLaw.UNIT, (1.0, 1.0), 0)


def test_window_extension_nests():
    a = ld.sample_compound_poisson_jumps(2.0, JumpLaw.UNIT, (-2.0, 1.0), RngStream(16))
    b = ld.sample_compound_poisson_jumps(2.0, JumpLaw.UNIT, (-6.0, 1.0), RngStream(16))
    np.testing.assert_array_equal(b.restrict(-2.0, 1.0).times, a.times)


SPECS = [LevySpec.stable(0.8), LevySpec.stable(1.5, 2.0), LevySpec.compound_poisson(3.0, "normal", 0.5),
         LevySpec.compound_poisson(1.0, "uniform", 2.0), LevySpec.tempered(1.5, 1.0, 0.5)]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind.value}-{s.beta}")
def test_reproducible(spec):
    a = ld.sample_levy_increments(spec, 0.25, 1000, RngStream(17, 3))
    b = ld.sample_levy_increments(spec, 0.25, 1000, RngStream(17, 3))
    c = ld.sample_levy_increments(spec, 0.25, 1000, RngStream(17, 4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind.value}-{s.beta}")
def test_characteristic_function_property(spec):
    count = 2 * 10**5
    x = ld.sample_levy_increments(spec, 0.5, count, RngStream(18))
    u = np.linspace(0.1, 3.0, 10)
    emp = np.array([np.mean(np.cos(ui * x)) for ui in u])
    ana = np.exp(0.5 * ld.characteristic_exponent(spec, u))
    assert np.max(np.abs(emp - ana)) < 4.0 / math.sqrt(count)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind.value}-{s.beta}")
def test_symmetry(spec):
    x = ld.sample_levy_increments(spec, 1.0, 10**6, RngStream(19))
    y = np.sign(x) * np.minimum(np.abs(x), 1.0)
    assert abs(y.mean()) < 3 * mc_se(y)


def test_blumenthal_getoor():
    assert LevySpec.stable(1.3).blumenthal_getoor() == 1.3
    assert LevySpec.tempered(0.7).blumenthal_getoor() == 0.7
    assert LevySpec.compound_poisson(2.0).blumenthal_getoor() == 0.0


@given(st.integers(0, 2**63), st.integers(0, 2**63))
def test_stream_keys_reproduce(seed, sid):
    a = RngStream(seed, sid).generator().random(4)
    b = RngStream(seed, sid).generator().random(4)
    np.testing.assert_array_equal(a, b)


def test_stream_rejects_negative():
    with pytest.raises(ParameterDomainError):
        RngStream(-1)


def test_spec_roundtrip():
    for spec in SPECS:
        assert LevySpec.from_dict(spec.to_dict()) == spec
