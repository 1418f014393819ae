import math

import numpy as np
import pytest
from scipy import integrate

from mixheat.geometry import Ball, BallUnion, Interval, IntervalUnion
from mixheat.identity_checks import (IdentityReport, check_levy_system, check_scaling,
                                     check_subordination_bound, jump_rate_into, largest_gap)
from mixheat.killed_sim import SimScheme
from mixheat.levy_sampling import ProcessParams, RngStream, fractional_constant

UNION = IntervalUnion(((0, 1), (2, 3)))


def test_jump_rate_interval_vs_quadrature():
    p = ProcessParams(1.3, 0.6)
    target = Interval(2, 3)
    c = p.weight * fractional_constant(1, 1.3)
    for x in (0.2, 0.9):
        want = integrate.quad(lambda z: c * (z - x) ** -2.3, 2, 3)[0]
        assert jump_rate_into(p, target, np.array([[x]]))[0] == pytest.approx(want, rel=1e-10)
    with pytest.raises(ValueError):
        jump_rate_into(p, target, np.array([[2.5]]))
    assert np.all(jump_rate_into(ProcessParams(1.0, 0.0), target, np.array([[0.5]])) == 0)


def test_jump_rate_disc_vs_quadrature():
    p = ProcessParams(1.0, 1.0, 2)
    target = Ball((3, 0), 1)
    c = fractional_constant(2, 1.0)
    f = lambda r, th: c * r * ((3 + r * math.cos(th)) ** 2 + (r * math.sin(th)) ** 2) ** -1.5
    want = integrate.dblquad(f, 0, 2 * math.pi, 0, 1, epsrel=1e-10)[0]
    assert jump_rate_into(p, target, np.array([[0.0, 0.0]]))[0] == pytest.approx(want, rel=1e-6)


def test_levy_system_interval_union():
    rep = check_levy_system(UNION, ProcessParams(1.0, 1.0), 0.5, 0.2, Interval(2, 3), SimScheme(dt=1e-3),
                            40_000, RngStream(1))
    assert rep.passed, rep.line()
    assert rep.rhs > 0 and rep.lhs > 0
    assert rep.line().startswith("PASS")


@pytest.mark.slow
def test_levy_system_disc_union():
    dom = BallUnion((((0, 0), 1), ((3, 0), 1)))
    rep = check_levy_system(dom, ProcessParams(1.0, 1.0, 2), (0, 0), 0.2, Ball((3, 0), 1), SimScheme(dt=1e-3),
                            30_000, RngStream(2))
    assert rep.passed, rep.line()


def test_levy_system_a0_is_zero():
    rep = check_levy_system(UNION, ProcessParams(1.0, 0.0), 0.5, 0.1, Interval(2, 3), SimScheme(dt=1e-3),
                            2000, RngStream(3))
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed


def test_levy_system_rejects_bad_targets():
    p = ProcessParams(1.0, 1.0)
    with pytest.raises(ValueError, match="overlaps"):
        check_levy_system(UNION, p, 0.5, 0.1, Interval(0.5, 3), SimScheme(dt=1e-3), 10)
    with pytest.raises(ValueError, match="need"):
        check_levy_system(UNION, p, 0.5, 0.1, Interval(1.05, 3), SimScheme(dt=1e-3), 10)
    with pytest.raises(ValueError, match="not in the domain"):
        check_levy_system(UNION, p, 1.5, 0.1, Interval(2, 3), SimScheme(dt=1e-3), 10)


def test_scaling_lambda_one_is_exact():
    rep = check_scaling(Interval(0, 1), ProcessParams(1.0, 0.5), 1.0, 0.1, 0.4, n_paths=5000,
                        scheme=SimScheme(dt=1e-3), rng=RngStream(4))
    assert rep.lhs == rep.rhs and rep.z == 0


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_scaling_survival(lam):
    rep = check_scaling(Interval(0, 1), ProcessParams(1.5, 0.7), lam, 0.1 * lam ** 2, 0.3, n_paths=40_000,
                        scheme=SimScheme(dt=1e-3), rng=RngStream(5))
    assert rep.passed, rep.line()
    assert rep.details["lambda"] == lam


def test_scaling_kernel():
    rep = check_scaling(Interval(0, 1), ProcessParams(1.0, 0.5), 2.0, 0.4, 0.5, 0.4, n_paths=40_000,
                        scheme=SimScheme(dt=1e-3), rng=RngStream(6))
    assert rep.name == "scaling_kernel" and rep.passed, rep.line()
    with pytest.raises(ValueError):
        check_scaling(Interval(0, 1), ProcessParams(1.0, 0.5), 0.0, 0.1, 0.5)


def test_subordination_bound_and_largest_gap():
    grid = [(t, 0.5, y) for t in (0.05, 0.2) for y in (0.3, 0.5, 0.8)]
    reps = check_subordination_bound(Interval(0, 1), ProcessParams(1.0, 0.5), grid, SimScheme(dt=1e-3),
                                     30_000, RngStream(7))
    assert len(reps) == 6 and all(r.passed for r in reps)
    top = largest_gap(reps)
    assert top.details["gap"] == max(r.details["gap"] for r in reps)
    with pytest.raises(ValueError):
        check_subordination_bound(UNION, ProcessParams(1.0, 0.5), grid, n_paths=10)


def test_report_line_and_json():
    r = IdentityReport("x", 1.0, 0.1, 1.2, 0.1, -1.41, True)
    assert r.line().startswith("PASS  x")
    assert r.to_json()["rhs"] == 1.2
    assert "FAIL" in IdentityReport("y", 0, 0, 1, 0, -math.inf, False).line()
