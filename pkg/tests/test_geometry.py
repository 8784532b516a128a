import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.spatial import ConvexHull

from santalo_lab.geometry import (
    CartesianGrid,
    DirectionGrid,
    GridFunction,
    ReferenceMeasure,
    StarBody,
    TruncationWarning,
    gauge_eval,
    integrate_exp,
    measure_of_body,
    node_weights,
    section_bounds,
    steiner_symmetrize,
)

LEB2 = ReferenceMeasure.lebesgue(2)


def polygon_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def random_polygon(rng, grid):
    P = rng.normal(size=(6, 2)) * rng.uniform(0.5, 2.0, size=2)
    P = np.vstack([P, -P])
    return StarBody.from_polygon(P[ConvexHull(P).vertices], grid)


# -- direction grids ---------------------------------------------------------


@pytest.mark.parametrize("dim,count,total", [(1, 2, 2.0), (2, 8, 2 * math.pi), (2, 256, 2 * math.pi)])
def test_direction_weights_sum_to_sphere_measure(dim, count, total):
    g = DirectionGrid(dim, count)
    assert abs(g.weights.sum() - total) < 1e-12


@pytest.mark.parametrize("count", [8, 64, 256])
def test_direction_grid_closed_under_negation(count):
    g = DirectionGrid(2, count)
    k = np.arange(count)
    assert np.array_equal(g.directions[g.antipode(k)], -g.directions)
    assert np.array_equal(g.weights[g.antipode(k)], g.weights)


def test_direction_grid_rejects_bad_counts():
    with pytest.raises(ValueError):
        DirectionGrid(2, 10)
    with pytest.raises(ValueError):
        DirectionGrid(1, 4)
    with pytest.raises(ValueError):
        DirectionGrid(3, 8)


# -- star bodies and gauges --------------------------------------------------


def test_gauge_of_interval():
    assert gauge_eval(StarBody.interval(2.0), [3.0]) == pytest.approx(1.5)


def test_gauge_of_unit_disk():
    assert gauge_eval(StarBody.lp_ball(2), [0.3, 0.4]) == pytest.approx(0.5, rel=1e-12)


def test_gauge_of_diamond():
    assert gauge_eval(StarBody.lp_ball(1), [1.0, 1.0]) == pytest.approx(2.0, rel=1e-12)


def test_gauge_is_zero_at_origin_and_rejects_dimension_mismatch():
    K = StarBody.lp_ball(2)
    assert gauge_eval(K, [0.0, 0.0]) == 0.0
    with pytest.raises(ValueError):
        gauge_eval(K, [1.0, 2.0, 3.0])


@given(t=st.floats(0.0, 50.0), x=st.floats(-5, 5), y=st.floats(-5, 5),
       interp=st.sampled_from(["nearest", "polygon"]))
def test_gauge_is_positively_homogeneous(t, x, y, interp):
    K = StarBody.lp_ball(3)
    a = gauge_eval(K, [t * x, t * y], interp)
    b = t * gauge_eval(K, [x, y], interp)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_polygon_gauge_is_one_on_the_boundary_polygon():
    K = StarBody.from_quadratic_form([[2.0, 0.5], [0.5, 1.0]])
    mids = 0.5 * (K.boundary_points + np.roll(K.boundary_points, -1, axis=0))
    assert np.allclose(gauge_eval(K, mids, "polygon"), 1.0, atol=1e-12)


def test_star_body_rejects_asymmetric_and_nonpositive_radii():
    g = DirectionGrid(2, 8)
    with pytest.raises(ValueError):
        StarBody(g, np.arange(1, 9, dtype=float))
    with pytest.raises(ValueError):
        StarBody(g, np.zeros(8))


def test_convex_flag_is_checked():
    g = DirectionGrid(2, 8)
    star = np.array([1, 3, 1, 3, 1, 3, 1, 3], dtype=float)
    StarBody(g, star)  # a star body that is not convex is fine without the flag
    with pytest.raises(ValueError):
        StarBody(g, star, convex=True)


def test_star_body_round_trip():
    K = StarBody.lp_ball(3)
    L = StarBody.from_dict(K.to_dict())
    assert np.array_equal(K.radial, L.radial) and L.convex


# -- measures of bodies ------------------------------------------------------


def test_disk_area_sector_rule_is_pi():
    assert measure_of_body(StarBody.lp_ball(2), LEB2, rule="sector") == pytest.approx(math.pi, rel=1e-4)


def test_disk_area_polygon_rule_is_inscribed_polygon():
    # oracle: area of the regular inscribed K-gon
    K = 256
    exact = 0.5 * K * math.sin(2 * math.pi / K)
    assert measure_of_body(StarBody.lp_ball(2), LEB2) == pytest.approx(exact, rel=1e-12)


def test_l3_ball_area_matches_gamma_formula():
    p = 3.0
    oracle = (2 * math.gamma(1 + 1 / p)) ** 2 / math.gamma(1 + 2 / p)
    assert oracle == pytest.approx(3.533, abs=1e-3)
    fine = StarBody.lp_ball(p, grid=DirectionGrid(2, 4096))
    assert measure_of_body(fine, LEB2) == pytest.approx(oracle, rel=1e-5)
    assert measure_of_body(StarBody.lp_ball(p), LEB2, rule="sector") == pytest.approx(oracle, rel=1e-4)


def test_interval_length():
    assert measure_of_body(StarBody.interval(1.0), ReferenceMeasure.lebesgue(1)) == pytest.approx(2.0)


def test_gaussian_measure_of_disk_matches_closed_form():
    # oracle: P(|Z| <= R) = 1 - exp(-R^2/2) for a standard planar Gaussian
    R = 1.3
    K = StarBody.lp_ball(2, grid=DirectionGrid(2, 2048), radius=R)
    got = measure_of_body(K, ReferenceMeasure.gaussian(2))
    inscribed = 0.5 * 2048 * math.sin(2 * math.pi / 2048) / math.pi   # polygon-vs-disk factor, first order
    assert got == pytest.approx(1 - math.exp(-R * R / 2), rel=5e-6 / inscribed)


def test_polygon_rule_matches_shoelace_for_random_polygons(rng):
    g = DirectionGrid(2, 256)
    for _ in range(5):
        K = random_polygon(rng, g)
        assert measure_of_body(K, LEB2) == pytest.approx(polygon_area(K.boundary_points), rel=1e-12)


def test_polygon_rule_gaussian_against_scipy_dblquad():
    g = DirectionGrid(2, 64)
    K = StarBody.from_polygon([[1, 0], [0, 2], [-1, 0], [0, -2]], g)
    m = ReferenceMeasure.gaussian(2)
    # oracle: the diamond |x| + |y|/2 <= 1, integrated by adaptive quadrature
    f = lambda y, x: math.exp(-(x * x + y * y) / 2) / (2 * math.pi)
    val, _ = integrate.dblquad(f, -1, 1, lambda x: -2 * (1 - abs(x)), lambda x: 2 * (1 - abs(x)),
                               epsabs=1e-12)
    assert measure_of_body(K, m) == pytest.approx(val, rel=1e-8)


# -- Steiner symmetrization --------------------------------------------------


def test_steiner_diamond_is_fixed():
    K = StarBody.lp_ball(1)
    S = steiner_symmetrize(K, 0)
    assert np.allclose(S.radial, K.radial, rtol=1e-9)


def test_steiner_of_tilted_ellipse():
    g = DirectionGrid(2, 1024)
    E = StarBody.from_quadratic_form([[1.0, 0.5], [0.5, 1.0]], g)
    S = steiner_symmetrize(E, 0)
    # oracle: chord of x^2 + xy + y^2 <= 1 at height y has length sqrt(4 - 3y^2),
    # so the symmetral is x^2 + (3/4) y^2 <= 1
    target = StarBody.from_quadratic_form([[1.0, 0.0], [0.0, 0.75]], g)
    assert np.max(np.abs(S.radial / target.radial - 1)) < 2e-3
    lo, hi = section_bounds(S.boundary_points, 0, np.array([0.0, 0.5, 1.0]))
    assert np.allclose(hi - lo, np.sqrt(4 - 3 * np.array([0.0, 0.5, 1.0]) ** 2) / 1.0, rtol=2e-3)


def test_steiner_preserves_area_of_random_polygons(rng):
    g = DirectionGrid(2, 256)
    for _ in range(10):
        K = random_polygon(rng, g)
        for axis in (0, 1):
            S = steiner_symmetrize(K, axis)
            assert measure_of_body(S, LEB2) == pytest.approx(measure_of_body(K, LEB2), rel=1e-3)
            assert S.convex and S.asymmetry() >= 0


def test_steiner_output_is_symmetric_about_the_axis_hyperplane(rng):
    g = DirectionGrid(2, 256)
    K = random_polygon(rng, g)
    S = steiner_symmetrize(K, 0)
    flip = g.reflection_index(0)
    assert np.allclose(S.radial, S.radial[flip], rtol=1e-6)


def test_steiner_rejects_nonconvex_and_is_identity_in_1d():
    g = DirectionGrid(2, 8)
    star = StarBody(g, np.array([1, 3, 1, 3, 1, 3, 1, 3], dtype=float))
    with pytest.raises(ValueError):
        steiner_symmetrize(star, 0)
    I = StarBody.interval(1.5)
    assert steiner_symmetrize(I, 0) is I


# -- Cartesian grids, grid functions, quadrature -----------------------------


def test_cartesian_grid_spacing_and_symmetry():
    g = CartesianGrid(1, 8.0, 321)
    assert g.spacing == pytest.approx(2 * 8.0 / 320)
    assert np.allclose(g.axis, -g.axis[::-1]) and g.axis[160] == 0.0
    with pytest.raises(ValueError):
        CartesianGrid(1, 1.0, 10)


def test_grid_function_rejects_odd_functions():
    g = CartesianGrid(1, 2.0, 11)
    with pytest.raises(ValueError):
        GridFunction(g, g.axis)


def test_grid_function_round_trip_with_infinity():
    g = CartesianGrid(1, 2.0, 11)
    v = np.where(np.abs(g.axis) > 1.0, np.inf, g.axis ** 2)
    V = GridFunction(g, v)
    W = GridFunction.from_dict(V.to_dict())
    assert np.array_equal(V.values, W.values)
    assert V.to_dict()["values"][0] == "inf"


def test_gaussian_integral():
    g = CartesianGrid.default(1)
    V = GridFunction.from_callable(g, lambda x: 0.5 * x[..., 0] ** 2)
    assert integrate_exp(V, 1.0, ReferenceMeasure.lebesgue(1)) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-9)


def test_cubic_integral_against_high_resolution_oracle():
    g = CartesianGrid.default(1)
    V = GridFunction.from_callable(g, lambda x: np.abs(x[..., 0]) ** 3 / 3)
    oracle, _ = integrate.quad(lambda t: math.exp(-abs(t) ** 3 / 3), -np.inf, np.inf, epsabs=1e-13)
    assert oracle == pytest.approx(2 * math.gamma(1 / 3) / 3 ** (2 / 3), rel=1e-10)
    assert oracle == pytest.approx(2.5758, abs=1e-4)
    assert integrate_exp(V, 1.0, ReferenceMeasure.lebesgue(1)) == pytest.approx(oracle, rel=1e-4)


def test_indicator_integrates_to_volume_of_finite_cells():
    g = CartesianGrid(2, 2.0, 41)
    x = g.nodes()
    V = GridFunction(g, np.where(np.max(np.abs(x), axis=-1) <= 1.0 + 1e-12, 0.0, np.inf))
    for alpha in (0.5, 1.0, 3.0):
        assert integrate_exp(V, alpha, LEB2) == pytest.approx(4.0, rel=1e-12)


def test_truncation_is_diagnosed():
    g = CartesianGrid(1, 1.0, 21)
    V = GridFunction(g, np.zeros(21))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        total, info = integrate_exp(V, 1.0, ReferenceMeasure.lebesgue(1), full_output=True)
    assert total == pytest.approx(2.0)
    assert info["truncation"] > 1e-3
    assert any(issubclass(w.category, TruncationWarning) for w in rec)


def test_all_infinite_function_is_flagged():
    g = CartesianGrid(1, 1.0, 21)
    V = GridFunction(g, np.full(21, np.inf))
    with pytest.warns(RuntimeWarning):
        assert integrate_exp(V, 1.0, ReferenceMeasure.lebesgue(1)) == 0.0


def test_node_weights_sum_to_box_volume():
    g = CartesianGrid(2, 3.0, 31)
    assert node_weights(g).sum() == pytest.approx(36.0, rel=1e-12)


# -- reference measures ------------------------------------------------------


@pytest.mark.parametrize("m", [ReferenceMeasure.lebesgue(2), ReferenceMeasure.gaussian(2),
                               ReferenceMeasure.exponential_product(2), ReferenceMeasure.power(2, 1.5)])
def test_declared_measure_flags_verify(m):
    assert m.verify()["ok"]


def test_power_measure_homogeneity_residual():
    rep = ReferenceMeasure.power(2, 2.0).verify()
    assert rep["homogeneous"] and rep["homogeneity_residual"] < 1e-9


def test_false_unconditional_flag_is_caught():
    m = ReferenceMeasure.custom(2, lambda x: np.exp(x[..., 0]), unconditional=True)
    assert not m.verify()["ok"]
