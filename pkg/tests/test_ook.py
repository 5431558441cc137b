"""OOK link layer: threshold, Poisson tails, enumeration, Monte Carlo."""

import math

import numpy as np
import pytest
from scipy import special as sp
from scipy import stats

from dmcsphere.ook import (
    DegenerateSignalError,
    DetectorMode,
    EnumerationTooLargeError,
    LinkConfig,
    analytic_ber,
    conditional_error,
    mc_ci95,
    memory_slots,
    monte_carlo_ber,
    poisson_cdf,
    threshold,
)


def geometric_p_obs(p0=2e-4, decay=0.35):
    """Synthetic channel: p_obs(t) = p0 * decay^(t/T0_unit); fast and exact."""

    def p_fn(t):
        return p0 * decay ** (t / 0.02)

    return p_fn


def test_threshold_closed_form():
    # N p0 = 10, S = 10 -> 10/ln 2
    assert threshold(10.0, 1.0, [10.0]) == pytest.approx(10.0 / math.log(2.0), rel=1e-15)
    assert threshold(10.0, 1.0, []) == 0.0
    assert threshold(10.0, 1.0, [0.0]) == 0.0


def test_threshold_degenerate():
    with pytest.raises(DegenerateSignalError):
        threshold(0.0, 1.0, [1.0])
    with pytest.raises(DegenerateSignalError):
        threshold(10.0, 0.0, [1.0])


def test_threshold_bounds():
    rng = np.random.default_rng(2)
    for _ in range(50):
        np0 = float(rng.uniform(0.1, 100))
        s = float(rng.uniform(0.01, 50))
        thr = threshold(1.0, np0, [s])
        assert 0.0 < thr < np0 + s


def test_threshold_is_likelihood_crossover():
    # Poisson(S) vs Poisson(S + Np0) likelihoods cross exactly at Thr
    np0, s = 14.0, 6.0
    thr = threshold(1.0, np0, [s])
    for y in range(0, 200):
        ll1 = stats.poisson.logpmf(y, s + np0)
        ll0 = stats.poisson.logpmf(y, s)
        if y > thr:
            assert ll1 > ll0
        else:
            assert ll0 >= ll1


def test_poisson_cdf_oracles():
    # frozen mpmath gammainc oracles
    assert poisson_cdf(12, 10.0) == pytest.approx(0.79155647639487433894, rel=1e-13)
    assert poisson_cdf(700, 650.0) == pytest.approx(0.9751407056323369112, rel=1e-12)
    assert poisson_cdf(0, 3.0) == pytest.approx(math.exp(-3.0), rel=1e-14)
    assert poisson_cdf(-1, 5.0) == 0.0
    assert poisson_cdf(4, 0.0) == 1.0


def test_poisson_cdf_matches_gammaincc_broadly():
    rng = np.random.default_rng(7)
    for _ in range(100):
        mu = float(rng.uniform(0.01, 2000))
        k = int(rng.integers(0, 2200))
        ref = float(sp.gammaincc(k + 1.0, mu))
        assert poisson_cdf(k, mu) == pytest.approx(ref, rel=1e-11, abs=1e-300)


def test_conditional_error_closed_forms():
    p_fn = geometric_p_obs()
    link = LinkConfig(5e4, 0.02, 2, 0.01)
    p0 = p_fn(0.01)
    np0 = 5e4 * p0
    # no ISI bits set: Thr = 0, error for b0=1 is P(y=0) = e^{-np0}
    assert conditional_error([1, 0, 0], link, p_fn) == pytest.approx(
        math.exp(-np0), rel=1e-12
    )
    # b0 = 0 with zero mean: P(y > 0) = 0
    assert conditional_error([0, 0, 0], link, p_fn) == 0.0


def test_conditional_error_monte_carlo_oracle():
    p_fn = geometric_p_obs(p0=4e-4)
    link = LinkConfig(5e4, 0.02, 2, 0.01)
    bits = [1, 1, 0]
    p_err = conditional_error(bits, link, p_fn)
    p0 = p_fn(0.01)
    s = 5e4 * p_fn(0.02 + 0.01)
    thr = threshold(5e4, p0, [s])
    rng = np.random.default_rng(123)
    n = 10_000_000
    y = rng.poisson(5e4 * p0 + s, size=n)
    emp = float(np.mean(y <= thr))
    sigma = math.sqrt(p_err * (1 - p_err) / n)
    assert abs(emp - p_err) < 3 * sigma + 1e-12


def test_analytic_ber_no_signal():
    link = LinkConfig(0.0, 0.02, 2, 0.01)
    assert analytic_ber(link, geometric_p_obs()).ber == pytest.approx(0.5, abs=1e-15)


def test_analytic_ber_memoryless_closed_form():
    # M = 0: ber = 0.5 e^{-mu1}
    p_fn = geometric_p_obs()
    link = LinkConfig(5e4, 0.02, 0, 0.01)
    mu1 = 5e4 * p_fn(0.01)
    res = analytic_ber(link, p_fn)
    assert res.ber == pytest.approx(0.5 * math.exp(-mu1), rel=1e-12)
    assert res.n_patterns == 2


def test_analytic_ber_structure():
    p_fn = geometric_p_obs()
    link = LinkConfig(5e4, 0.02, 3, 0.01)
    res = analytic_ber(link, p_fn)
    assert res.n_patterns == 16
    assert len(res.per_pattern) == 16
    assert all(0.0 <= v <= 1.0 for v in res.per_pattern.values())
    assert res.ber == pytest.approx(sum(res.per_pattern.values()) / 16, rel=1e-14)
    assert 0.0 <= res.ber <= 0.5 + 1e-12


def test_pattern_symmetry_through_s():
    # patterns with equal ISI sum S give exactly equal conditional errors
    def p_flat(t):
        return 1e-4  # every ISI tap identical

    link = LinkConfig(5e4, 0.02, 3, 0.01)
    res = analytic_ber(link, p_flat)
    # (1,1,0,0), (1,0,1,0), (1,0,0,1) all have S = one tap
    e1 = res.per_pattern[(1, 1, 0, 0)]
    e2 = res.per_pattern[(1, 0, 1, 0)]
    e3 = res.per_pattern[(1, 0, 0, 1)]
    assert e1 == e2 == e3


def test_ber_monotone_in_n():
    p_fn = geometric_p_obs()
    bers = [
        analytic_ber(LinkConfig(n, 0.02, 2, 0.01), p_fn).ber
        for n in (1e3, 1e4, 5e4)
    ]
    assert bers[0] >= bers[1] >= bers[2]


def test_enumeration_bound():
    with pytest.raises(EnumerationTooLargeError):
        analytic_ber(LinkConfig(5e4, 0.02, 25, 0.01), geometric_p_obs())


def test_memory_slots_rule():
    assert memory_slots(0.2, 0.02) == 10
    assert memory_slots(0.2, 0.03) == 7
    assert memory_slots(0.2, 0.2) == 1
    assert memory_slots(0.0, 0.02) == 0


def test_link_config_validation():
    with pytest.raises(ValueError):
        LinkConfig(-1.0, 0.02, 2, 0.01)
    with pytest.raises(ValueError):
        LinkConfig(1e4, 0.02, 2, 0.03)  # t_s > T0
    with pytest.raises(ValueError):
        LinkConfig(1e4, 0.02, -1, 0.01)


def test_monte_carlo_matches_analytic():
    p_fn = geometric_p_obs(p0=3e-4, decay=0.5)
    link = LinkConfig(2e4, 0.02, 3, 0.01)
    exact = analytic_ber(link, p_fn).ber
    n_bits = 1_000_000
    mc = monte_carlo_ber(link, p_fn, n_bits=n_bits, seed=42)
    sigma = math.sqrt(exact * (1 - exact) / n_bits)
    assert abs(mc - exact) < 3 * sigma


def test_monte_carlo_deterministic():
    p_fn = geometric_p_obs()
    link = LinkConfig(5e4, 0.02, 2, 0.01)
    a = monte_carlo_ber(link, p_fn, n_bits=200000, seed=9)
    b = monte_carlo_ber(link, p_fn, n_bits=200000, seed=9)
    c = monte_carlo_ber(link, p_fn, n_bits=200000, seed=10)
    assert a == b
    assert a != c  # different seed, different stream


def test_decision_feedback_at_least_genie():
    p_fn = geometric_p_obs(p0=1.5e-4, decay=0.6)
    for n in (5e3, 2e4):
        genie = monte_carlo_ber(
            LinkConfig(n, 0.02, 4, 0.01, DetectorMode.GENIE), p_fn,
            n_bits=500000, seed=3,
        )
        df = monte_carlo_ber(
            LinkConfig(n, 0.02, 4, 0.01, DetectorMode.DECISION_FEEDBACK), p_fn,
            n_bits=500000, seed=3,
        )
        assert df >= genie


def test_mc_ci95():
    assert mc_ci95(0.0, 100) == 0.0
    assert mc_ci95(0.5, 10000) == pytest.approx(1.96 * 0.5 / 100, rel=1e-12)
