import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixheat.geometry import (OUTSIDE, Annulus, Ball, BallUnion, DimensionError, HalfSpace, Interval,
                              IntervalUnion, component_of, distance_to_complement, domain_from_config,
                              regularity_radii, sample_uniform)

UNION = IntervalUnion(((0, 1), (2, 3)))
DOMAINS = [Interval(0, 1), UNION, Ball((0, 0), 1), BallUnion((((0, 0), 1), ((3, 0), 0.5))),
           Annulus((0, 0), 1, 2)]


def test_distance_examples():
    assert distance_to_complement(Ball((0, 0), 1), (0, 0)) == 1
    assert distance_to_complement(UNION, 2.5) == 0.5
    assert distance_to_complement(Ball((0, 0), 1), (2, 0)) == 0
    assert distance_to_complement(UNION, 1.5) == 0
    assert distance_to_complement(Annulus((0, 0), 1, 2), (1.2, 0)) == pytest.approx(0.2)
    assert distance_to_complement(HalfSpace((0, 2), 2), (5, 3)) == pytest.approx(2)


def test_component_examples():
    assert component_of(UNION, 0.5) == 0
    assert component_of(UNION, 2.5) == 1
    assert component_of(UNION, 1.5) is None
    assert component_of(UNION, 1.0) is None
    balls = BallUnion((((0, 0), 1), ((3, 0), 0.5)))
    assert component_of(balls, (3.1, 0)) == 1
    np.testing.assert_array_equal(component_of(UNION, np.array([0.5, 1.5, 2.5])), [0, OUTSIDE, 1])


def test_regularity_examples():
    assert regularity_radii(Ball((0, 0), 1)) == (1, 1, math.inf)
    assert regularity_radii(UNION) == (0.5, 0.5, 1.0)
    assert regularity_radii(Annulus((0, 0), 1, 2)) == (0.5, 1, math.inf)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        distance_to_complement(Ball((0, 0), 1), 0.5)
    with pytest.raises(DimensionError):
        component_of(Ball((0, 0), 1), (0, 0, 0))


def test_invalid_shapes():
    with pytest.raises(ValueError):
        IntervalUnion(((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        BallUnion((((0, 0), 1), ((1.5, 0), 1)))
    with pytest.raises(ValueError):
        Ball((0,), 1)
    with pytest.raises(ValueError):
        Annulus((0, 0), 2, 1)


@pytest.mark.parametrize("dom", DOMAINS)
def test_config_round_trip(dom):
    assert domain_from_config(dom.to_config()) == dom


def test_scaled():
    assert UNION.scaled(2) == IntervalUnion(((0, 2), (4, 6)))
    assert Ball((1, 0), 1).scaled(3) == Ball((3, 0), 3)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(DOMAINS), st.integers(0, 2 ** 32 - 1))
def test_inscribed_ball_inside(dom, seed):
    rng = np.random.default_rng(seed)
    x = sample_uniform(dom, 1, rng)
    delta = dom.distance(x)[0]
    assert delta > 0
    d = dom.dimension
    v = rng.standard_normal((200, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = x + 0.999 * delta * rng.uniform(0, 1, (200, 1)) ** (1 / d) * v
    assert np.all(dom.component_index(pts) == dom.component_index(x)[0])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(DOMAINS), st.integers(0, 2 ** 32 - 1))
def test_distance_lipschitz(dom, seed):
    rng = np.random.default_rng(seed)
    lo, hi = dom.bounding_box()
    p = rng.uniform(lo - 0.5, hi + 0.5, (100, dom.dimension))
    q = rng.uniform(lo - 0.5, hi + 0.5, (100, dom.dimension))
    gap = np.abs(dom.distance(p) - dom.distance(q))
    assert np.all(gap <= np.linalg.norm(p - q, axis=1) + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([UNION, Ball((0, 0), 1), BallUnion((((0, 0), 1), ((3, 0), 0.5)))]),
       st.integers(0, 2 ** 32 - 1))
def test_component_constant_on_segments(dom, seed):
    rng = np.random.default_rng(seed)
    pts = sample_uniform(dom, 2, rng)
    k = dom.component_index(pts)
    if k[0] != k[1]:
        return
    s = np.linspace(0, 1, 50)[:, None]
    seg = pts[0] + s * (pts[1] - pts[0])
    assert np.all(dom.component_index(seg) == k[0])
