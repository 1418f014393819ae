import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixheat.geometry import Interval, IntervalUnion
from mixheat.kernel_estimation import estimate_dirichlet_kernel
from mixheat.killed_sim import SimScheme
from mixheat.levy_sampling import ProcessParams, RngStream, fractional_constant
from mixheat.spectral1d import (MeshError, assemble, component_models, eigen_kernel, green_function,
                                largetime_checks, model_summary)

import oracles

UNIT = Interval(0, 1)
UNION = IntervalUnion(((0, 1), (2, 3)))


def test_brownian_ground_energy():
    m = assemble(UNIT, ProcessParams(1.0, 0.0), 1 / 256)
    assert m.lambda1 == pytest.approx(math.pi ** 2, rel=1e-3)
    # discrete Laplacian eigenvalues are known exactly: (4/h^2) sin^2(k pi h / 2)
    h = 1 / 256
    k = np.arange(1, 6)
    np.testing.assert_allclose(m.eigenvalues[:5], 4 / h ** 2 * np.sin(k * math.pi * h / 2) ** 2, rtol=1e-10)


def test_fractional_constant_alpha1():
    assert fractional_constant(1, 1.0) == pytest.approx(1 / math.pi, rel=1e-14)


def test_nonlocal_block_linear_in_weight():
    m1 = assemble(UNIT, ProcessParams(1.5, 0.7), 1 / 64)
    m2 = assemble(UNIT, ProcessParams(1.5, 1.4), 1 / 64)
    np.testing.assert_allclose(m2.nonlocal_block, 2 ** 1.5 * m1.nonlocal_block, rtol=1e-13)
    np.testing.assert_array_equal(m1.local, m2.local)


def test_matrix_symmetric_and_positive():
    m = assemble(UNION, ProcessParams(0.8, 0.6), 1 / 64)
    assert np.max(np.abs(m.matrix - m.matrix.T)) == 0
    assert m.lambda1 > 0
    assert np.all(m.phi[:, 0] > 0)
    assert m.eigenvalues[1] > m.eigenvalues[0]


def test_mesh_validation():
    with pytest.raises(MeshError):
        assemble(UNIT, ProcessParams(1.0, 0.5), 0.3)
    with pytest.raises(MeshError):
        assemble(UNIT, ProcessParams(1.0, 0.5), 1 / 8)
    with pytest.raises(TypeError):
        from mixheat.geometry import Ball
        assemble(Ball((0, 0), 1), ProcessParams(1.0, 0.5, 2), 1 / 32)


def test_block_spectrum_at_a0():
    m = assemble(UNION, ProcessParams(1.0, 0.0), 1 / 64)
    parts = np.sort(np.concatenate([c.eigenvalues for c in component_models(m)]))
    np.testing.assert_allclose(m.eigenvalues, parts, rtol=1e-12)
    off = m.matrix[m.comp == 0][:, m.comp == 1]
    assert np.all(off == 0)


def test_coupled_ground_energy_below_components():
    for a in (0.05, 0.3, 1.0):
        m = assemble(UNION, ProcessParams(1.0, a), 1 / 64)
        assert m.lambda1 < min(c.lambda1 for c in component_models(m))


def test_eigenvalue_continuity_in_a():
    a = 0.5
    base = assemble(UNION, ProcessParams(1.0, a), 1 / 64).lambda1
    diffs = [abs(assemble(UNION, ProcessParams(1.0, a + e), 1 / 64).lambda1 - base) for e in (0.1, 0.05, 0.025)]
    assert diffs[0] > diffs[1] > diffs[2]


def _observed_order(alpha, a, ns):
    lam = [assemble(UNIT, ProcessParams(alpha, a), 1 / n).lambda1 for n in ns]
    return math.log2((lam[0] - lam[1]) / (lam[1] - lam[2]))


def test_refinement_order():
    # the boundary behaviour of the nonlocal term caps the rate at min(1, 2 - alpha)
    assert _observed_order(1.0, 0.5, (128, 256, 512)) >= 0.9
    assert _observed_order(1.5, 0.5, (128, 256, 512)) >= 0.45


def test_eigen_kernel_large_time_dominance():
    m = assemble(UNIT, ProcessParams(1.0, 0.5), 1 / 64)
    x, y = 0.3, 0.6

    def ratio(t):
        k, _ = eigen_kernel(m, t, x, y)
        lead = math.exp(-m.lambda1 * t) * float((m.basis_at(x) @ m.phi[:, 0])[0] * (m.basis_at(y) @ m.phi[:, 0])[0])
        return k / lead
    assert abs(ratio(5.0) - ratio(10.0)) < 1e-3
    assert ratio(10.0) == pytest.approx(1.0, abs=1e-6)


def test_eigen_kernel_symmetric_positive():
    m = assemble(UNION, ProcessParams(1.2, 0.4), 1 / 64)
    pts = np.array([0.1, 0.4, 0.8, 2.2, 2.9])
    k, bound = eigen_kernel(m, 0.1, pts, pts)
    np.testing.assert_allclose(k, k.T, rtol=1e-12)
    assert np.all(k > 0)
    assert bound == 0.0
    _, b = eigen_kernel(m, 0.1, 0.5, 0.5, K=5)
    assert b > 0
    with pytest.raises(ValueError):
        eigen_kernel(m, 1e-4, 0.5, 0.5, K=5, tol=1e-12)


def test_semigroup_property():
    m = assemble(UNIT, ProcessParams(1.0, 0.5), 1 / 128)
    nodes = m.nodes
    k_half, _ = eigen_kernel(m, 0.1, 0.3, nodes)
    k_half2, _ = eigen_kernel(m, 0.1, nodes, 0.7)
    composed = float(k_half[0] @ k_half2[:, 0]) * m.h
    direct, _ = eigen_kernel(m, 0.2, 0.3, 0.7)
    assert composed == pytest.approx(direct, rel=1e-10)


def test_brownian_kernel_matches_sine_series():
    m = assemble(UNIT, ProcessParams(1.0, 0.0), 1 / 256)
    k, _ = eigen_kernel(m, 0.25, 0.5, 0.5)
    assert k == pytest.approx(oracles.sine_kernel(0.25, 0.5, 0.5), rel=1e-3)


def test_green_closed_form():
    m = assemble(UNIT, ProcessParams(1.0, 0.0), 1 / 256)
    assert green_function(m, 0.25, 0.75) == pytest.approx(0.0625, rel=1e-9)
    for x, y in [(0.1, 0.3), (0.5, 0.9), (0.33, 0.66)]:
        assert green_function(m, x, y) == pytest.approx(oracles.interval_green(x, y), rel=5e-3)


@pytest.mark.slow
def test_kernel_vs_monte_carlo():
    p = ProcessParams(1.0, 0.5)
    m = assemble(UNIT, p, 1 / 256)
    spec, _ = eigen_kernel(m, 0.5, 0.5, 0.5)
    est = estimate_dirichlet_kernel(UNIT, p, 0.5, 0.5, 0.5, scheme=SimScheme(dt=2.5e-4), n_paths=100_000,
                                    rng=RngStream(3))
    # discretization tolerance: O(h) error of the nonlocal part, measured by refinement
    coarse, _ = eigen_kernel(assemble(UNIT, p, 1 / 128), 0.5, 0.5, 0.5)
    assert abs(est.value - spec) < 4 * est.std_error + est.bias_bound + 2 * abs(spec - coarse)


def test_summary_and_largetime():
    m = assemble(UNION, ProcessParams(1.0, 0.5), 1 / 64)
    s = model_summary(m)
    assert len(s["eigenvalues"]) == 10 and s["phi1_over_delta_max"] > 0
    rep = largetime_checks(UNION, 1.0, [0.0, 0.1, 0.5], 1 / 64, [3.0, 6.0], [0.3, 0.5, 2.5])
    assert rep["per_a"][0]["cross_ratio_max"] is None
    for row in rep["per_a"][1:]:
        assert row["coupled_below_components"] and row["phi1_positive"]
        assert row["cross_ratio_min"] > 0
    assert rep["brownian_limit"] == pytest.approx(rep["brownian_component_lambda1"][0])
    with pytest.raises(ValueError):
        largetime_checks(UNIT, 1.0, [0.5], 1 / 64, [3.0], [0.5])


def test_basis_interpolation():
    m = assemble(UNIT, ProcessParams(1.0, 0.3), 1 / 32)
    f = np.sin(math.pi * m.nodes)
    got = m.basis_at(np.array([m.nodes[3], 0.5 * (m.nodes[3] + m.nodes[4]), 0.01]))
    np.testing.assert_allclose(got @ f, [f[3], 0.5 * (f[3] + f[4]), 0.01 / (1 / 32) * f[0]])
    with pytest.raises(ValueError):
        m.basis_at(1.5)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 1.8), st.floats(0.0, 2.0))
def test_spectrum_above_brownian(alpha, a):
    # adding a positive operator can only raise eigenvalues
    m0 = assemble(UNIT, ProcessParams(alpha, 0.0), 1 / 32)
    m = assemble(UNIT, ProcessParams(alpha, a), 1 / 32)
    assert np.all(m.eigenvalues >= m0.eigenvalues * (1 - 1e-12))
