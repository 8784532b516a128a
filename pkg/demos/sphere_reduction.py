"""Homogeneous tuples are determined by profiles on the circle.

A profile tuple lifts to homogeneous potentials in the plane.  The planar
functional of the lift is a fixed multiple of a functional on the circle,
and a transport step on the circle improves that functional.
"""

import numpy as np

from santalo_lab.costs import CostSpec
from santalo_lab.experiments import make_feasible, random_profiles
from santalo_lab.functional import bs_value, exponents_from_cost
from santalo_lab.geometry import DirectionGrid
from santalo_lab.sphere import profile_lift, spherical_bs_value, spherical_constant, spherical_transport_improve

cost = CostSpec("inner-product", 2, 2)
exp = exponents_from_cost(cost)
grid = DirectionGrid(2, 256)
rng = np.random.default_rng(5)

print(f"predicted ratio: {spherical_constant(exp):.6f}")
for k in range(4):
    P = random_profiles(grid, 2, rng, scale=(0.8, 1.1))
    ratio = bs_value(profile_lift(P, cost, exp)) / spherical_bs_value(P, None, exp)
    print(f"  profiles {k}: planar / circle = {ratio:.6f}")

P = make_feasible(random_profiles(DirectionGrid(2, 128), 2, rng), cost, exp)
for step in range(3):
    P, rep = spherical_transport_improve(P, cost, exp)
    print(f"step {step}: circle functional {rep.value_before:.4f} -> {rep.value_after:.4f}")
