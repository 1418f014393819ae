import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from mixheat.levy_sampling import (FreeDensityTable, ProcessParams, QuadratureError, RngStream,
                                   fractional_constant, free_density, free_density_mc,
                                   positive_stable_density, sample_increment, sample_stable_subordinator,
                                   stable_tail)

import oracles


def test_params_validation():
    with pytest.raises(ValueError):
        ProcessParams(2.0, 1.0)
    with pytest.raises(ValueError):
        ProcessParams(1.0, -0.1)
    with pytest.raises(ValueError):
        sample_stable_subordinator(1.0, 1.0, np.random.default_rng(0))


def test_a_t_accessor():
    p = ProcessParams(1.0, 2.0)
    assert p.a_t(4.0) == pytest.approx(2.0 * 4.0 ** 0.5)
    assert ProcessParams(1.5, 1.0).scaled(2.0).a == pytest.approx(2.0 ** (-1 / 3))


def test_fractional_constant_known_values():
    # A(1, 1) = 1 / pi (Cauchy); A(3, 1) = 1 / pi^2
    assert fractional_constant(1, 1.0) == pytest.approx(1 / math.pi)
    assert fractional_constant(3, 1.0) == pytest.approx(1 / math.pi ** 2)


def test_rng_determinism():
    a = sample_stable_subordinator(0.5, 1.0, RngStream(5, 3), 100)
    b = sample_stable_subordinator(0.5, 1.0, RngStream(5, 3), 100)
    c = sample_stable_subordinator(0.5, 1.0, RngStream(5, 4), 100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("rho", [0.25, 0.5, 0.75])
def test_laplace_transform(rho):
    s = sample_stable_subordinator(rho, 1.0, np.random.default_rng(11), 200_000)
    for u in (0.5, 1.0, 2.0):
        e = np.exp(-u * s)
        assert abs(e.mean() - math.exp(-u ** rho)) < 4 * e.std() / math.sqrt(len(s))


def test_half_stable_ks():
    s = sample_stable_subordinator(0.5, 1.0, np.random.default_rng(12), 200_000)
    assert stats.kstest(s, oracles.half_stable_cdf).pvalue > 0.01


def test_self_similarity():
    rng = np.random.default_rng(13)
    s1 = sample_stable_subordinator(0.6, 1.0, rng, 50_000)
    st_ = sample_stable_subordinator(0.6, 3.0, rng, 50_000) / 3.0 ** (1 / 0.6)
    assert stats.ks_2samp(s1, st_).pvalue > 0.01


def test_half_stable_density_matches_closed_form():
    s = np.geomspace(0.02, 1e4, 300)
    np.testing.assert_allclose(positive_stable_density(0.5, s), oracles.half_stable_density(s), rtol=1e-9)
    deep = np.geomspace(1e-3, 0.02, 20)     # values down to 1e-105
    np.testing.assert_allclose(positive_stable_density(0.5, deep), oracles.half_stable_density(deep), rtol=1e-5)


@pytest.mark.parametrize("rho", [0.25, 0.5, 0.75])
def test_stable_tail(rho):
    s = 3 * 2.0 ** (1 / rho)
    f = lambda v: positive_stable_density(rho, np.array([v]))[0]
    mass, _ = integrate.quad(f, 0, s, limit=400, epsabs=1e-13)
    assert stable_tail(rho, s) == pytest.approx(1 - mass, abs=1e-9)
    if rho == 0.5:
        assert stable_tail(rho, s) == pytest.approx(1 - float(oracles.half_stable_cdf(s)), rel=1e-12)
    with pytest.raises(ValueError):
        stable_tail(rho, 1.0)


def test_increment_a0_gaussian():
    inc = sample_increment(ProcessParams(1.0, 0.0), 1.0, np.random.default_rng(1), 200_000)
    assert np.all(inc.jump_part == 0)
    v = inc.displacement[:, 0]
    assert abs(v.var() - 2) < 4 * math.sqrt(2) * 2 / math.sqrt(len(v))


def test_increment_characteristic_function():
    x = sample_increment(ProcessParams(1.0, 1.0), 1.0, np.random.default_rng(2), 400_000).displacement[:, 0]
    for xi in (0.5, 1.0, 2.0):
        c = np.cos(xi * x)
        assert abs(c.mean() - math.exp(-(xi ** 2 + xi))) < 4 * c.std() / math.sqrt(len(x))


def test_increment_symmetry_and_shapes():
    inc = sample_increment(ProcessParams(1.5, 0.7, 2), 0.01, np.random.default_rng(3), 100_000)
    assert inc.gaussian_part.shape == (100_000, 2)
    m = inc.displacement.mean(axis=0)
    se = inc.gaussian_part.std(axis=0) / math.sqrt(100_000)
    assert np.all(np.abs(inc.gaussian_part.mean(axis=0)) < 4 * se)
    assert sample_increment(ProcessParams(1.0, 1.0, 3), 0.1, np.random.default_rng(0)).jump_part.shape == (3,)
    assert np.all(np.isfinite(m))


def test_increment_scaling_law():
    alpha, a, lam, dt = 1.0, 0.8, 2.0, 0.5
    rng = np.random.default_rng(4)
    big = sample_increment(ProcessParams(alpha, a), dt / lam ** 2, rng, 100_000).displacement[:, 0] * lam
    small = sample_increment(ProcessParams(alpha, a).scaled(lam), dt, rng, 100_000).displacement[:, 0]
    assert stats.ks_2samp(big, small).pvalue > 0.01


def test_free_density_a0_exact():
    r = np.linspace(0, 3, 7)
    for d in (1, 2):
        want = (4 * math.pi * 0.7) ** (-d / 2) * np.exp(-r ** 2 / 2.8)
        np.testing.assert_array_equal(free_density(ProcessParams(1.0, 0.0, d), 0.7, r), want)


def test_free_density_alpha1_r0():
    # oracle: integral of the Gaussian at r = 0 against the closed-form 1/2-stable density
    f = lambda s: (4 * math.pi * (1 + s)) ** -0.5 * oracles.half_stable_density(s)
    want = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-12)[0] + integrate.quad(f, 1, np.inf, epsabs=0,
                                                                                  epsrel=1e-12)[0]
    assert free_density(ProcessParams(1.0, 1.0), 1.0, 0.0) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("alpha,a,t", [(1.0, 0.5, 0.5), (0.5, 1.0, 0.1), (1.5, 1.0, 1.0), (0.5, 0.1, 1.0)])
def test_free_density_fourier_oracle(d, alpha, a, t):
    for r in (0.0, 0.01, 0.5, 2.0, 5.0):
        got = free_density(ProcessParams(alpha, a, d), t, r)
        assert got == pytest.approx(oracles.free_density_fourier(alpha, a, t, r, d), rel=1e-8)


def test_free_density_vs_mc():
    p = ProcessParams(1.0, 1.0, 1)
    r = np.array([0.0, 0.5, 1.0, 2.0])
    mc, se = free_density_mc(p, 1.0, r, 1_000_000, np.random.default_rng(6))
    np.testing.assert_allclose(free_density(p, 1.0, r), mc, rtol=0.01)
    assert np.all(np.abs(free_density(p, 1.0, r) - mc) < 4 * se)


def test_quadrature_nodes_validated():
    with pytest.raises(ValueError):
        free_density(ProcessParams(1.0, 1.0), 1.0, 0.5, quadrature_nodes=8)


def test_table_matches_direct():
    p = ProcessParams(0.5, 0.3, 2)
    tab = FreeDensityTable(p, 0.01, 2.0)
    r = np.array([0.0, 0.05, 0.3, 1.0, 1.9, 3.0])
    np.testing.assert_allclose(tab(r), free_density(p, 0.01, r), rtol=1e-6)
    assert np.ndim(tab(0.1)) == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 1.8), st.floats(0.0, 3.0), st.floats(0.01, 2.0), st.integers(1, 2))
def test_free_density_monotone_in_r(alpha, a, t, d):
    vals = free_density(ProcessParams(alpha, a, d), t, np.linspace(0, 4, 30))
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) <= 1e-15 * vals[0])


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 1.8), st.floats(0.01, 3.0), st.floats(0.05, 2.0), st.floats(0.0, 3.0))
def test_free_density_scaling(alpha, a, t, r):
    # rescaling space by t^{-1/2} maps weight a at time t to weight a_t at time 1
    p = ProcessParams(alpha, a, 1)
    unit = ProcessParams(alpha, p.a_t(t), 1)
    lhs = free_density(p, t, r)
    rhs = t ** -0.5 * free_density(unit, 1.0, r / math.sqrt(t))
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_quadrature_error_type():
    assert issubclass(QuadratureError, RuntimeError)


def test_tiny_weight_is_gaussian():
    for a in (1e-308, 1e-200, 1e-30):
        got = free_density(ProcessParams(1.0, a), 1.0, 0.5)
        assert got == pytest.approx(free_density(ProcessParams(1.0, 0.0), 1.0, 0.5), rel=1e-9)
