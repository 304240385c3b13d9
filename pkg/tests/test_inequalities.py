import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeanderson.halfplane import hyp_dist
from treeanderson.inequalities import (
    INEQUALITIES,
    almost_triangle_slack,
    contraction_slack,
    convex_slack,
    iratio_slack,
    perturb_slack,
    property_suite,
    quasiconvex_slack,
    random_maps,
    random_points,
    rconvex_slack,
)

TOL = -1e-10
points = st.builds(complex, st.floats(-20, 20), st.floats(1e-2, 20))


def test_full_suite_passes():
    results = property_suite(n=20_000, seed=5)
    assert [r.name for r in results] == list(INEQUALITIES)
    assert all(r.passes for r in results), results


def test_maps_send_half_plane_into_itself(rng):
    maps = random_maps(rng, 10_000)
    a, b, c, d, shift = maps
    assert np.all(a * d - b * c > 0)
    assert np.all(shift.imag >= 0)
    z = random_points(rng, 10_000)
    assert np.all(((a * z + b) / (c * z + d) + shift).imag > 0)


@settings(max_examples=300)
@given(points, points, points)
def test_convex(z1, z2, w):
    assert convex_slack(np.array(z1), np.array(z2), np.array(w)) >= TOL


@settings(max_examples=300)
@given(points, points, points, points)
def test_quasiconvex(z1, z2, w1, w2):
    assert quasiconvex_slack(*map(np.array, (z1, z2, w1, w2))) >= TOL


@settings(max_examples=300)
@given(points, points)
def test_iratio(z, w):
    assert iratio_slack(np.array(z), np.array(w)) >= TOL


@settings(max_examples=300)
@given(points, points, points)
def test_almost_triangle(z, w1, w2):
    assert almost_triangle_slack(*map(np.array, (z, w1, w2))) >= TOL


@settings(max_examples=300)
@given(st.lists(points, min_size=2, max_size=5), points)
def test_rconvex(zs, w):
    assert rconvex_slack(np.array(zs)[:, None], np.array([w])) >= TOL


def test_rconvex_is_equality_for_equal_points():
    z = np.array([[0.3 + 2j], [0.3 + 2j]])
    w = np.array([1j])
    assert abs(rconvex_slack(z, w)[0]) < 1e-15


def test_triangle_inequality_fails_but_almost_triangle_holds():
    # d is not a metric: i, 2i, 4i violate the triangle inequality
    a, b, c = 1j, 2j, 4j
    assert hyp_dist(a, c) > hyp_dist(a, b) + hyp_dist(b, c)
    assert almost_triangle_slack(np.array(a), np.array(c), np.array(b)) >= 0


def test_contraction_for_elementary_maps(rng):
    z, w = random_points(rng, 5000), random_points(rng, 5000)
    one, zero = np.ones(5000), np.zeros(5000)
    inversion = (zero, -one, one, zero, zero)
    shift = (one, zero, zero, one, random_points(rng, 5000, 1.0))
    dilation = (np.exp(rng.normal(size=5000)), zero, zero, one, zero)
    for maps in (inversion, shift, dilation):
        assert np.min(contraction_slack(maps, z, w)) >= TOL
    # inversion and dilation are automorphisms: equality
    for maps in (inversion, dilation):
        lhs = hyp_dist((maps[0] * z + maps[1]) / (maps[2] * z + maps[3]), (maps[0] * w + maps[1]) / (maps[2] * w + maps[3]))
        np.testing.assert_allclose(lhs, hyp_dist(z, w), rtol=1e-10)


def test_perturb_rademacher_is_exact(rng):
    # two-point law: the expectation is an exact average, no Monte Carlo error
    z, w = random_points(rng, 2000, 1.0), random_points(rng, 2000, 1.0)
    s = rng.uniform(0, 1, 2000)
    X = np.stack([s * w.imag, -s * w.imag])
    slack, se = perturb_slack(z, w, s, X, C=26.0)
    assert np.all(se * 0 == 0)
    assert np.min(slack) >= TOL


def test_perturb_constant_is_needed():
    # with C = 0 the bound fails for any nonzero perturbation of a point onto itself
    z = w = np.array([1j])
    s = np.array([0.5])
    X = np.array([[0.5], [-0.5]])
    slack, _ = perturb_slack(z, w, s, X, C=0.0)
    assert slack[0] < 0


@pytest.mark.parametrize("seed", [0, 1])
def test_perturb_monte_carlo_with_gaussian_law(seed):
    rng = np.random.default_rng(seed)
    m = 100
    z, w = random_points(rng, m, 1.0), random_points(rng, m, 1.0)
    s = rng.uniform(0, 1, m)
    # E X**4 = 3 sigma**4 <= s**4 Im(w)**4
    sigma = s * w.imag / 3**0.25
    X = rng.standard_normal((20_000, m)) * sigma
    slack, se = perturb_slack(z, w, s, X, C=64.0)
    assert np.min(slack + 3 * se) >= TOL
    assert math.isfinite(float(np.max(se)))
