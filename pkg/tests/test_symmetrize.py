import numpy as np
import pytest

from santalo_lab.costs import CostSpec
from santalo_lab.experiments import random_body_tuple
from santalo_lab.functional import bs_set_value
from santalo_lab.geometry import DirectionGrid, ReferenceMeasure, StarBody, measure_of_body
from santalo_lab.symmetrize import (
    HypothesisError,
    check_axial_monotone_density,
    check_sectional_log_concavity,
    jii_symmetrize,
    section_average_inclusion,
    unconditionalize,
)
from santalo_lab.transforms import BodyTuple, c_polar_component, set_admissibility_excess

GRID = DirectionGrid(2, 256)
PROD2 = CostSpec("product", 2, 2)
PROD3 = CostSpec("product", 3, 2)
LEB = ReferenceMeasure.lebesgue(2)


def with_polar(bodies, cost):
    """Complete a tuple by putting the c-polar of the others in the last slot."""
    tup = BodyTuple(tuple(bodies) + (bodies[0],), cost)
    return tup.replace(cost.N - 1, c_polar_component(tup, cost.N - 1))


def rotated_square(angle, grid=GRID):
    c, s = np.cos(angle), np.sin(angle)
    P = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float) @ np.array([[c, s], [-s, c]])
    return StarBody.from_polygon(P, grid)


# -- density hypotheses --------------------------------------------------------


def test_standard_measures_satisfy_both_density_hypotheses():
    for m in (LEB, ReferenceMeasure.gaussian(2), ReferenceMeasure.exponential_product(2)):
        for axis in (0, 1):
            assert check_axial_monotone_density(m, axis)
            assert check_sectional_log_concavity(m, axis)


def test_increasing_density_fails_the_axial_hypothesis():
    m = ReferenceMeasure.custom(2, lambda x: 1.0 + x[..., 0] ** 2)
    assert not check_axial_monotone_density(m, 0)


def test_non_log_concave_density_fails_the_sectional_hypothesis():
    m = ReferenceMeasure.custom(2, lambda x: np.exp(x[..., 1] ** 2 / 4))
    assert not check_sectional_log_concavity(m, 0)


# -- single steps --------------------------------------------------------------


def test_axis_symmetric_tuple_is_a_fixed_point():
    E = StarBody.from_quadratic_form([[2.0, 0.0], [0.0, 0.5]], GRID)
    tup = with_polar([E], PROD2)
    out, step = jii_symmetrize(tup, 0, 0, 1)
    assert step.measure_i1_after == pytest.approx(step.measure_i1_before, rel=1e-9)
    assert step.measure_i2_after == pytest.approx(step.measure_i2_before, rel=1e-9)
    assert np.allclose(out[0].radial, E.radial, rtol=1e-9)


def test_random_polygons_satisfy_both_measure_inequalities():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        cost = PROD2 if trial % 2 == 0 else PROD3
        tup = random_body_tuple(cost, GRID, rng)
        j = int(rng.integers(0, 2))
        out, step = jii_symmetrize(tup, j, 0, cost.N - 1)
        assert step.measure_i1_after >= step.measure_i1_before * (1 - 1e-3)
        assert step.measure_i2_after >= step.measure_i2_polar * (1 - 1e-3)
        assert step.slack_after >= -1e-6
        assert set_admissibility_excess(out) <= 1e-6


def test_gaussian_measures_step():
    rng = np.random.default_rng(5)
    g = ReferenceMeasure.gaussian(2)
    for _ in range(5):
        tup = random_body_tuple(PROD2, GRID, rng)
        out, step = jii_symmetrize(tup, 1, 0, 1, measures=[g, g])
        assert step.measure_i1_after >= step.measure_i1_before * (1 - 1e-3)
        assert step.measure_i2_after >= step.measure_i2_polar * (1 - 1e-3)


def test_untouched_slots_are_unchanged():
    rng = np.random.default_rng(6)
    tup = random_body_tuple(PROD3, GRID, rng)
    out, _ = jii_symmetrize(tup, 0, 0, 2)
    assert out[1] is tup[1]


def test_hypothesis_failures_leave_the_input_alone():
    E = StarBody.from_quadratic_form([[1.0, 0.3], [0.3, 1.0]], GRID)
    half = CostSpec("absolute-weighted-product", 2, 2, {"exponents": [[0.5, 1], [0.5, 1]]})
    with pytest.raises(HypothesisError):
        jii_symmetrize(BodyTuple((E, E), half), 0, 0, 1)
    with pytest.raises(HypothesisError):
        jii_symmetrize(BodyTuple((E.scaled(3.0), E), PROD2), 0, 0, 1)   # inadmissible
    star = StarBody(GRID, 1.0 + 0.3 * np.cos(4 * GRID.angles))
    with pytest.raises(HypothesisError):
        jii_symmetrize(BodyTuple((star, star.scaled(0.3)), PROD2), 0, 0, 1)
    bad = ReferenceMeasure.custom(2, lambda x: 1.0 + x[..., 0] ** 2)
    with pytest.raises(HypothesisError):
        jii_symmetrize(with_polar([E], PROD2), 0, 0, 1, measures=[bad, LEB])
    with pytest.raises(HypothesisError):
        jii_symmetrize(with_polar([E], PROD2), 0, 1, 1)


def test_section_average_inclusion_for_the_product_cost():
    rng = np.random.default_rng(8)
    for _ in range(10):
        tup = random_body_tuple(PROD2, GRID, rng)
        A = tup[1]
        out, _ = jii_symmetrize(tup, 0, 0, 1)
        # midpoints of opposite sections of the old polar body lie inside the
        # new one, up to the resampling error of the direction grid
        scale = np.max(out[1].radial)
        assert section_average_inclusion(A, out[1], axis=0) <= 1e-3 * scale


# -- iterated unconditionalization ----------------------------------------------


def test_unconditional_tuple_is_left_unchanged():
    B = StarBody.lp_ball(3, grid=GRID)
    tup = with_polar([B], PROD2)
    out, rep = unconditionalize(tup)
    assert rep.converged and rep.rounds == 0
    assert all(np.allclose(a.radial, b.radial, rtol=1e-9) for a, b in zip(out, tup))


def test_rotated_square_becomes_unconditional():
    tup = with_polar([rotated_square(0.5)], PROD2)
    out, rep = unconditionalize(tup, max_rounds=8)
    assert max(rep.asymmetry) < 1e-3
    assert all(b >= a * (1 - 1e-3) for a, b in zip(rep.measures_before, rep.measures_after))
    assert rep.value_after >= rep.value_before * (1 - 1e-3)
    # the record of steps serializes
    assert len(rep.to_dict()["steps"]) == 2 * rep.rounds


def test_set_value_never_decreases_over_seeded_trials():
    rng = np.random.default_rng(13)
    for _ in range(5):
        tup = random_body_tuple(PROD3, GRID, rng)
        before = bs_set_value(tup, (1, 1, 1))
        out, rep = unconditionalize(tup, max_rounds=2)
        assert rep.value_before == pytest.approx(before)
        assert bs_set_value(out, (1, 1, 1)) >= before * (1 - 1e-3)


def test_unconditionalize_refuses_unverified_measures():
    m = ReferenceMeasure.custom(2, lambda x: np.exp(x[..., 0]))
    tup = with_polar([rotated_square(0.3)], PROD2)
    with pytest.raises(HypothesisError):
        unconditionalize(tup, measures=[m, m])


def test_steiner_step_measure_is_exact_for_lebesgue():
    rng = np.random.default_rng(21)
    tup = random_body_tuple(PROD2, GRID, rng)
    _, step = jii_symmetrize(tup, 0, 0, 1)
    assert step.measure_i1_after == pytest.approx(measure_of_body(tup[0], LEB), rel=1e-12)
