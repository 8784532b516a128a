import math

import numpy as np
import pytest

from santalo_lab.costs import CostSpec
from santalo_lab.experiments import make_feasible, random_profiles
from santalo_lab.functional import bs_value, exponents_from_cost
from santalo_lab.geometry import CartesianGrid, DirectionGrid
from santalo_lab.sphere import (
    SphericalProfile,
    lifted_ray_slack,
    profile_lift,
    spherical_bs_value,
    spherical_constant,
    spherical_constraint_slack,
    spherical_transport_improve,
)

IP = CostSpec("inner-product", 2, 2)
EXP = exponents_from_cost(IP)
G64 = DirectionGrid(2, 64)


def test_profile_must_be_positive_and_even():
    with pytest.raises(ValueError):
        SphericalProfile(G64, np.zeros(64))
    with pytest.raises(ValueError):
        SphericalProfile(G64, 1.0 + 0.1 * np.cos(G64.angles))
    with pytest.raises(ValueError):
        SphericalProfile(G64, np.ones(10))


# -- constraint slack ----------------------------------------------------------


def test_unit_profiles_are_tight_on_aligned_directions():
    P = [SphericalProfile.constant(G64)] * 2
    sl = spherical_constraint_slack(P, IP, exp=EXP)
    assert sl.min_slack == pytest.approx(0.0, abs=1e-12)
    a, b = (np.array(w) for w in sl.witness)
    assert abs(a @ b) == pytest.approx(1.0)
    # oracle: 1 - cos(angle) over all direction pairs
    ang = G64.angles
    assert np.min(1 - np.cos(ang[:, None] - ang[None, :])) == pytest.approx(sl.min_slack, abs=1e-12)


def test_halved_profiles_are_infeasible():
    P = [SphericalProfile.constant(G64, 0.5)] * 2
    sl = spherical_constraint_slack(P, IP, exp=EXP)
    assert sl.min_slack == pytest.approx(-0.75)
    assert not sl.feasible and sl.witness is not None


def tight(profiles, cost, exp):
    """Scale all profiles by one factor so the constraint is tight (slack 0)."""
    lo, hi = 0.1, 10.0
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        ok = spherical_constraint_slack([p.scaled(mid) for p in profiles], cost, exp=exp).min_slack >= 0
        lo, hi = (lo, mid) if ok else (mid, hi)
    return [p.scaled(hi) for p in profiles]


def test_admissibility_of_the_lift_matches_the_spherical_constraint():
    rng = np.random.default_rng(2)
    signs = []
    for k in range(20):
        P = tight(random_profiles(G64, 2, rng), IP, EXP)
        P = [p.scaled(1.03 if k % 2 == 0 else 0.97) for p in P]
        sph = spherical_constraint_slack(P, IP, exp=EXP).min_slack
        lift = lifted_ray_slack(P, IP, EXP, samples=5000, seed=k).min_slack
        assert np.sign(sph) == np.sign(lift), (k, sph, lift)
        signs.append(np.sign(sph))
    assert signs.count(-1) == 10 and signs.count(1) == 10


# -- spherical functional ------------------------------------------------------


def test_unit_profiles_give_the_circle_length():
    P = [SphericalProfile.constant(G64)] * 2
    expected = math.prod((2 * math.pi) ** (1 / float(a)) for a in EXP.alpha)
    assert spherical_bs_value(P, None, EXP) == pytest.approx(expected, rel=1e-12)


def test_scaling_one_profile():
    rng = np.random.default_rng(3)
    P = random_profiles(G64, 2, rng)
    lam = 1.7
    k = EXP.n + float(EXP.r[0])
    moved = [P[0].scaled(lam), P[1]]
    ratio = spherical_bs_value(moved, None, EXP) / spherical_bs_value(P, None, EXP)
    assert ratio == pytest.approx(lam ** (-k / float(EXP.alpha[0])), rel=1e-12)


@pytest.mark.parametrize("family,N", [("inner-product", 2), ("product", 3)])
def test_ratio_to_the_lifted_functional_is_a_constant(family, N):
    cost = CostSpec(family, N, 2)
    exp = exponents_from_cost(cost)
    grid = DirectionGrid(2, 256)
    cart = CartesianGrid(2, 6.0, 241)
    rng = np.random.default_rng(4)
    ratios = []
    for _ in range(3):
        P = random_profiles(grid, N, rng)
        ratios.append(bs_value(profile_lift(P, cost, exp, cart)) / spherical_bs_value(P, None, exp))
    assert (max(ratios) - min(ratios)) / np.mean(ratios) < 1e-3
    assert np.mean(ratios) == pytest.approx(spherical_constant(exp), rel=2e-3)


# -- transport improvement -------------------------------------------------------


def test_constant_profiles_only_rescale():
    P = [SphericalProfile.constant(G64)] * 2
    psi, rep = spherical_transport_improve(P, IP, EXP)
    assert rep.ok and rep.even
    assert max(rep.ratio_spread) < 1e-9
    assert rep.constant_product == pytest.approx(1.0, abs=1e-9)
    assert rep.value_after == pytest.approx(rep.value_before, rel=1e-9)


def test_random_feasible_profiles_do_not_decrease():
    rng = np.random.default_rng(5)
    for _ in range(3):
        P = make_feasible(random_profiles(G64, 2, rng), IP, EXP)
        psi, rep = spherical_transport_improve(P, IP, EXP)
        assert rep.ok
        assert rep.value_after >= rep.value_before - 1e-9
        assert rep.slack_after >= -1e-9
        assert all(np.allclose(q.values, q.values[G64.antipode(np.arange(64))]) for q in psi)


def test_repeated_improvement_is_monotone_and_bounded():
    rng = np.random.default_rng(6)
    P = make_feasible(random_profiles(G64, 2, rng), IP, EXP)
    values = []
    for _ in range(4):
        P, rep = spherical_transport_improve(P, IP, EXP)
        values.append(rep.value_after)
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
    # the constraint is only imposed on grid directions, so the discrete
    # problem may exceed the continuum maximum slightly
    unit = spherical_bs_value([SphericalProfile.constant(G64)] * 2, None, EXP)
    assert values[-1] <= unit * 1.01


def test_infeasible_profiles_are_rejected():
    P = [SphericalProfile.constant(G64, 0.5)] * 2
    with pytest.raises(ValueError, match="constraint"):
        spherical_transport_improve(P, IP, EXP)


def test_selection_lp_falls_back_when_dual_simplex_stalls():
    # this instance makes the dual simplex report an unknown status
    grid = DirectionGrid(2, 128)
    P = make_feasible(random_profiles(grid, 2, np.random.default_rng([20240601, 1004])), IP, EXP)
    psi, rep = spherical_transport_improve(P, IP, EXP)
    assert rep.ok and rep.even
    assert rep.value_after >= rep.value_before
