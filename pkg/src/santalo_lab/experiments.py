"""Builtin experiments, random instance generators and the experiment runner.

Each experiment kind has a trial function ``(config, k) -> (checks, data)``
and an optional aggregation step over all trials.  Trial ``k`` draws its
randomness from ``default_rng([seed, k])``, so results do not depend on
how trials are spread over worker processes.
"""

from __future__ import annotations

import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy
from scipy.spatial import ConvexHull

from .costs import CostSpec
from .functional import (
    admissibility_slack,
    bs_value,
    exponents_from_cost,
    layer_cake_check,
    stationarity_check,
    WeightProfile,
    weighted_product_inequality_check,
)
from .geometry import CartesianGrid, DirectionGrid, GridFunction, StarBody, gauge_eval, DEFAULT_DIRECTIONS
from .io import ConfigError, ExperimentConfig, cost_from_config, load_body_tuple, load_function_tuple, \
    measure_from_config
from .reports import Check, Report
from .sphere import (
    SphericalProfile,
    lifted_ray_slack,
    profile_lift,
    spherical_bs_value,
    spherical_constant,
    spherical_constraint_slack,
    spherical_transport_improve,
)
from .symmetrize import jii_symmetrize, section_average_inclusion, unconditionalize
from .transforms import BodyTuple, FunctionTuple, best_response_cycle, c_polar_component, \
    homogeneous_lift, set_admissibility_excess
from .transport import (
    DiscreteProblem,
    discrete_maximizer,
    grid_maximizer,
    monotonicity_step,
    reverse_certificate,
    transport_entropy_check,
)

__all__ = [
    "Builtin",
    "BUILTINS",
    "DEFAULT_TOLERANCES",
    "list_builtins",
    "validate",
    "run_experiment",
    "reference_bound",
    "reference_tuple",
    "random_even_start",
    "random_function_tuple",
    "random_polygon",
    "random_body_tuple",
    "random_profiles",
    "make_feasible",
    "random_discrete_problem",
    "random_admissible_potentials",
    "young_challengers",
]

DEFAULT_TOLERANCES = {
    "admissibility": 1e-9,      # absolute slack
    "bound": 0.02,              # relative excess over the closed-form bound
    "reference": 0.01,          # relative error of the reference maximizer value
    "first_order": 1e-3,
    "variance": 5e-3,
    "homogeneity": 0.05,        # relative error of fitted exponents
    "fixed_point": 1e-8,
    "lift": 1e-6,
    "domination": 0.02,
    "layer_cake": 1e-3,
    "monotonicity": 1e-9,
    "complementary_slackness": 1e-9,
    "entropy": 1e-9,
    "ratio": 1e-3,
    "improvement": 1e-9,
    "measure": 1e-3,
    "inclusion": 1e-3,          # section-average excess relative to the body's outer radius
    "convergence_rate": 0.95,
    "weighted_product": 1e-3,
}

FUNCTIONAL_CHECKS = ("admissibility", "bound", "reference", "stationarity", "homogeneity")
SET_CHECKS = ("admissibility", "lift", "domination", "layer-cake")
MODES = {"transport": ("monotonicity", "entropy", "certificate"),
         "sphere": ("reduction", "improvement"),
         "symmetrize": ("step", "sweep")}


@dataclass(frozen=True)
class Builtin:
    name: str
    description: str
    config: dict


def _b(name, description, **config):
    config.setdefault("name", name)
    return Builtin(name, description, config)


_LIST = [
    _b("classical-bs-1d", "Classical functional inequality on the line: int e^-V int e^-V* <= 2 pi",
       kind="verify-functional", cost={"family": "inner-product", "N": 2, "n": 1},
       source={"type": "random"}, trials=20, seed=0,
       options={"checks": ["admissibility", "bound", "reference"], "sweeps": 3}),
    _b("thm-1.1-product-cost", "Sharp bound for the product cost x1 x2 x3 on the line",
       kind="verify-functional", cost={"family": "product", "N": 3, "n": 1},
       source={"type": "random"}, trials=10, seed=0,
       options={"checks": ["admissibility", "bound", "reference"], "sweeps": 3}),
    _b("maximizer-homogeneity", "Maximizers minus their value at 0 are homogeneous of degree beta",
       kind="verify-functional", cost={"family": "product", "N": 3, "n": 1},
       source={"type": "builtin", "name": "smooth-start"},
       options={"checks": ["homogeneity"], "size": 25, "stride": 6}),
    _b("stationarity-identities", "First and second order identities at the Gaussian maximizer",
       kind="verify-functional", cost={"family": "inner-product", "N": 2, "n": 1},
       source={"type": "builtin", "name": "gaussian-pair"},
       options={"checks": ["admissibility", "stationarity"]}),
    _b("weighted-product", "Weighted product inequality on the positive orthant (exponential change of variables)",
       kind="verify-functional", cost={"family": "weighted-product", "N": 3, "n": 1,
                                       "params": {"alpha": ["1/2", "1", "1"]}},
       source={"type": "random"}, trials=6, seed=0, options={}),
    _b("transport-monotonicity", "One transport step never decreases the discrete functional",
       kind="transport", cost={"family": "inner-product", "N": 2, "n": 1},
       trials=25, seed=0, options={"mode": "monotonicity", "max_support": 6}),
    _b("thm-2.4-transport-entropy", "Transport-entropy inequality K_min_d <= sum Ent/alpha at a maximizer",
       kind="transport", cost={"family": "product", "N": 3, "n": 1},
       trials=25, seed=0, options={"mode": "entropy", "max_support": 5}),
    _b("reverse-certificate", "Transport-entropy chain certifies that the maximizer beats admissible challengers",
       kind="transport", cost={"family": "inner-product", "N": 2, "n": 1},
       trials=10, seed=0, options={"mode": "certificate", "max_support": 6, "challengers": 4}),
    _b("sphere-reduction", "Homogeneous tuples: functional equals a constant times the spherical functional",
       kind="sphere", cost={"family": "inner-product", "N": 2, "n": 2},
       trials=8, seed=0, options={"mode": "reduction"}),
    _b("spherical-improvement", "Transport step on sphere profiles improves the spherical functional",
       kind="sphere", cost={"family": "inner-product", "N": 2, "n": 2}, grid={"directions": 128},
       trials=4, seed=0, options={"mode": "improvement"}),
    _b("set-lift", "Homogeneous lift of an admissible body tuple is admissible and dominates challengers",
       kind="verify-sets", cost={"family": "product", "N": 3, "n": 2},
       source={"type": "random"}, trials=5, seed=0,
       options={"checks": ["admissibility", "lift", "domination"], "challengers": 10}),
    _b("layer-cake", "int exp(-gauge^beta) dx = |K| Gamma(1 + n/beta) for convex polygons",
       kind="verify-sets", cost={"family": "product", "N": 3, "n": 2},
       source={"type": "random"}, trials=4, seed=0, options={"checks": ["layer-cake"], "betas": [2, 3, 4]}),
    _b("steiner-step", "Steiner step on one slot and c-polar rebuild of another keep measures",
       kind="symmetrize", cost={"family": "product", "N": 3, "n": 2}, grid={"directions": 512},
       measures=[{"kind": "lebesgue"}, {"kind": "gaussian"}],
       trials=10, seed=0, options={"mode": "step", "alternate_measures": True}),
    _b("unconditional-sweep", "Repeated symmetrization steps produce unconditional bodies",
       kind="symmetrize", cost={"family": "product", "N": 3, "n": 2}, grid={"directions": 512},
       measures=[{"kind": "lebesgue"}, {"kind": "gaussian"}],
       trials=6, seed=0, options={"mode": "sweep", "max_rounds": 8, "alternate_measures": True}),
    _b("exponent-system", "Exponent system of multi-homogeneous costs in exact rational arithmetic",
       kind="exponents", options={"cases": [
           {"p": [1, 1], "n": 1, "expect": {"alpha": [1, 1], "beta": [2, 2], "tau": ["1/2", "1/2"], "p": 2}},
           {"p": [1, 1, 1], "n": 2, "expect": {"alpha": [1, 1, 1], "beta": [3, 3, 3],
                                               "tau": ["1/3", "1/3", "1/3"], "p": 3}},
           {"p": [2, 3, 6], "n": 1, "expect": {"beta_equals_A": True}},
           {"p": [1, 1, 1], "r": [1, 0, 2], "n": 2, "expect": {}},
       ]}),
]

BUILTINS = {b.name: b for b in _LIST}


def list_builtins() -> list:
    """``(name, description)`` for every builtin experiment."""
    return [(b.name, b.description) for b in _LIST]


# ---------------------------------------------------------------------------
# reference values and random instances
# ---------------------------------------------------------------------------


def reference_bound(cost: CostSpec) -> float:
    """Closed-form maximal value for the product costs (Lebesgue, unit weights).

    The maximizer is ``sum_j |x_j|^N / N`` in every slot, so the value is
    ``(2 Gamma(1/N) N^(1/N - 1))^(N n)``.
    """
    if cost.family not in ("product", "inner-product"):
        raise ValueError(f"no closed-form bound for the {cost.family} cost")
    N, n = cost.N, cost.n
    one = 2.0 * math.gamma(1.0 / N) * N ** (1.0 / N - 1.0)
    return one ** (N * n)


def reference_tuple(cost: CostSpec, grid: CartesianGrid) -> FunctionTuple:
    """The maximizer ``sum_j |x_j|^N / N`` in each slot."""
    if cost.family not in ("product", "inner-product"):
        raise ValueError(f"no reference maximizer for the {cost.family} cost")
    N = cost.N
    f = np.abs(grid.axis) ** N / N
    comps = tuple(GridFunction.from_factors(grid, [f] * grid.dim, convex=True) for _ in range(N))
    return FunctionTuple(comps, cost)


def random_even_start(grid: CartesianGrid, rng) -> GridFunction:
    """Separable even convex function ``sum_j a|x_j|^q + b x_j^2 + const``."""
    factors = []
    for _ in range(grid.dim):
        t = grid.axis
        a, b, q = rng.uniform(0.2, 2.0), rng.uniform(0.0, 1.0), rng.uniform(1.2, 3.0)
        factors.append(a * np.abs(t) ** q + b * t * t + rng.uniform(-1.0, 1.0))
    return GridFunction.from_factors(grid, factors, convex=True)


def random_function_tuple(cost: CostSpec, grid: CartesianGrid, rng, sweeps: int = 3, measures=None,
                          alpha=None) -> FunctionTuple:
    """Admissible tuple: best-response sweeps from random even convex starts."""
    start = FunctionTuple(tuple(random_even_start(grid, rng) for _ in range(cost.N)), cost, alpha)
    out, _ = best_response_cycle(start, max_sweeps=sweeps, measures=measures)
    return out


def random_polygon(grid: DirectionGrid, rng, points: int = 5) -> StarBody:
    """Symmetric convex polygon: hull of ``+-`` normal points with random axis scales."""
    P = rng.normal(size=(points, 2)) * rng.uniform(0.5, 2.0, size=2)
    P = np.vstack([P, -P])
    hull = ConvexHull(P)
    return StarBody.from_polygon(P[hull.vertices], grid)


def random_body_tuple(cost: CostSpec, grid: DirectionGrid, rng) -> BodyTuple:
    """Random polygons scaled jointly so that the tuple is admissible (max cost 1)."""
    if cost.n != 2:
        raise ValueError("random body tuples are planar")
    bodies = BodyTuple(tuple(random_polygon(grid, rng) for _ in range(cost.N)), cost)
    degree = float(sum(exponents_from_cost(cost).p_marg))
    excess = set_admissibility_excess(bodies)
    s = (1.0 + excess) ** (-1.0 / degree)
    return BodyTuple(tuple(K.scaled(s) for K in bodies.bodies), cost)


def random_profiles(grid: DirectionGrid, N: int, rng, scale=(1.0, 1.0)) -> list:
    """Even profiles ``s (1.5 + 0.25 cos(2t + a) + 0.1 cos(4t + b))``."""
    th = grid.angles
    out = []
    for _ in range(N):
        v = 1.5 + 0.25 * np.cos(2 * th + rng.uniform(0, 2 * np.pi)) + 0.1 * np.cos(4 * th + rng.uniform(0, 2 * np.pi))
        out.append(SphericalProfile(grid, rng.uniform(*scale) * v))
    return out


def make_feasible(profiles, cost: CostSpec, exp) -> list:
    """Scale all profiles by one factor so the product constraint holds with equality somewhere."""
    sl = spherical_constraint_slack(profiles, cost, exp=exp)
    if sl.witness is None:
        return list(profiles)
    dirs = [np.asarray(w, dtype=float) for w in sl.witness]
    c = float(cost.evaluate(*dirs))
    prod = 1.0
    for P, d, p in zip(profiles, dirs, exp.p_marg):
        k = int(P.grid.nearest(d[None, :])[0])
        prod *= P.values[k] ** float(p)
    if c <= prod:
        return list(profiles)
    s = (c / prod) ** (1.0 / float(sum(exp.p_marg))) * (1 + 1e-12)
    return [P.scaled(s) for P in profiles]


def random_discrete_problem(cost: CostSpec, rng, max_support: int = 6, symmetric: bool = False,
                            alpha=None) -> DiscreteProblem:
    """Random supports (at most ``max_support`` points) with positive reference masses.

    With ``symmetric=True`` supports and masses are both invariant under ``x -> -x``.
    """
    supports, ref = [], []
    for _ in range(cost.N):
        if symmetric:
            half = int(rng.integers(1, max_support // 2 + 1))
            p = rng.normal(size=(half, cost.n))
            s = np.vstack([p, -p])
            r = rng.uniform(0.2, 1.0, size=half)
            r = np.concatenate([r, r])
        else:
            s = rng.normal(size=(int(rng.integers(2, max_support + 1)), cost.n))
            r = rng.uniform(0.2, 1.0, size=len(s))
        supports.append(s)
        ref.append(r)
    return DiscreteProblem(supports, ref, cost, alpha if alpha is not None else (1.0,) * cost.N)


def random_admissible_potentials(prob: DiscreteProblem, rng, margin: float = 0.5) -> list:
    """Random potentials; the last slot is the c-transform of the others plus a random margin."""
    V = [rng.normal(size=len(s)) for s in prob.supports]
    V[-1] = prob.c_transform(V, prob.N - 1) + rng.uniform(0.0, margin, size=len(prob.supports[-1]))
    return V


def young_challengers(bodies: BodyTuple, grid: CartesianGrid, rng, count: int, alpha) -> list:
    """Admissible function tuples ``(lam_i gauge_i)^q_i / q_i + kappa_i``.

    With ``sum 1/q_i = 1``, ``prod lam_i = 1`` and ``sum kappa_i >= 0`` these
    are admissible for a multilinear cost whenever the body tuple is, by
    Young's inequality for products.
    """
    N = bodies.N
    nodes = grid.nodes()
    gauges = [gauge_eval(K, nodes, interpolation="polygon") for K in bodies.bodies]
    out = []
    for _ in range(count):
        w = rng.dirichlet([2.0] * N)
        q = 1.0 / w
        lam = np.exp(rng.normal(scale=0.3, size=N))
        lam /= np.prod(lam) ** (1.0 / N)
        kappa = rng.uniform(-0.2, 0.2, size=N)
        kappa[-1] = -kappa[:-1].sum() + rng.uniform(0.0, 0.2)
        comps = tuple(GridFunction(grid, (l * g) ** qq / qq + k) for g, l, qq, k in zip(gauges, lam, q, kappa))
        out.append(FunctionTuple(comps, bodies.cost, alpha))
    return out


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------


def _tol(cfg: ExperimentConfig, key: str) -> float:
    return float(cfg.tolerances.get(key, DEFAULT_TOLERANCES[key]))


def _cartesian(cfg: ExperimentConfig, n: int) -> CartesianGrid:
    d = CartesianGrid.default(n)
    return CartesianGrid(n, float(cfg.grid.get("half_width", d.half_width)),
                         int(cfg.grid.get("points", d.points_per_axis)))


def _directions(cfg: ExperimentConfig, n: int) -> DirectionGrid:
    if n == 1:
        return DirectionGrid(1, 2)
    return DirectionGrid(2, int(cfg.grid.get("directions", DEFAULT_DIRECTIONS)))


def _measures(cfg: ExperimentConfig, N: int, n: int, k: int = 0) -> list:
    ms = [measure_from_config(m, n) for m in cfg.measures]
    if not ms:
        return [measure_from_config({"kind": "lebesgue"}, n)] * N
    if cfg.options.get("alternate_measures"):
        return [ms[k % len(ms)]] * N
    if len(ms) == 1:
        return ms * N
    return ms


def _rng(cfg: ExperimentConfig, k: int):
    return np.random.default_rng([int(cfg.seed or 0), k])


def _checks_option(cfg, allowed):
    checks = cfg.options.get("checks", list(allowed))
    bad = [c for c in checks if c not in allowed]
    if bad:
        raise ConfigError("options/checks", f"unknown checks {bad} (allowed: {list(allowed)})")
    return checks


def validate(cfg: ExperimentConfig) -> None:
    """Semantic checks beyond the schema; raises :class:`ConfigError`."""
    cost = cost_from_config(cfg.cost) if cfg.cost else None
    if cost is not None and cfg.measures and not cfg.options.get("alternate_measures") \
            and len(cfg.measures) not in (1, cost.N):
        raise ConfigError("measures", f"give 1 or {cost.N} measures, got {len(cfg.measures)}")
    if cfg.tolerances:
        bad = [k for k in cfg.tolerances if k not in DEFAULT_TOLERANCES]
        if bad:
            raise ConfigError("tolerances", f"unknown tolerance keys {bad}")
    if cfg.kind == "verify-functional":
        if cost.family != "weighted-product":
            _checks_option(cfg, FUNCTIONAL_CHECKS)
        src = cfg.source
        if src["type"] == "builtin" and src.get("name") not in ("gaussian-pair", "reference-maximizer",
                                                                  "smooth-start"):
            raise ConfigError("source/name", f"unknown builtin tuple {src.get('name')!r}")
        if "shift" in src and len(src["shift"]) != cost.N:
            raise ConfigError("source/shift", f"need {cost.N} shifts")
    elif cfg.kind == "verify-sets":
        _checks_option(cfg, SET_CHECKS)
        if cfg.source["type"] == "builtin":
            raise ConfigError("source/type", "body tuples come from 'random' or 'file' sources")
        if cfg.source["type"] == "random" and cost.n != 2:
            raise ConfigError("cost/n", "random body tuples are planar (n = 2)")
    elif cfg.kind in MODES:
        mode = cfg.options.get("mode")
        if mode not in MODES[cfg.kind]:
            raise ConfigError("options/mode", f"mode must be one of {list(MODES[cfg.kind])}")
        if cfg.kind in ("sphere", "symmetrize") and cost.n != 2:
            raise ConfigError("cost/n", f"{cfg.kind} experiments are planar (n = 2)")
    elif cfg.kind == "exponents":
        if not cfg.options.get("cases"):
            raise ConfigError("options/cases", "exponent experiments need a list of cases")


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------


def _source_tuple(cfg, cost, grid, rng, measures, alpha) -> FunctionTuple:
    src = cfg.source
    kind = src["type"]
    if kind == "file":
        tup = load_function_tuple(cfg.resolve(src["path"]))
    elif kind == "random":
        tup = random_function_tuple(cost, grid, rng, int(cfg.options.get("sweeps", 3)), measures, alpha)
    else:
        name = src["name"]
        if name == "gaussian-pair":
            if cost.family != "inner-product":
                raise ValueError("the Gaussian pair belongs to the inner-product cost")
            tup = reference_tuple(cost, grid)
        elif name == "reference-maximizer":
            tup = reference_tuple(cost, grid)
        else:
            t = grid.axis
            f = 0.5 * np.abs(t) ** 1.5 + 0.3 * t * t
            comps = tuple(GridFunction.from_factors(grid, [f] * grid.dim, convex=True) for _ in range(cost.N))
            tup = FunctionTuple(comps, cost, alpha)
    if "shift" in src:
        comps = tuple(V.shifted(float(s)) for V, s in zip(tup.components, src["shift"]))
        tup = FunctionTuple(comps, tup.cost, tup.alpha)
    return tup


def _exp_or_none(cost):
    try:
        return exponents_from_cost(cost)
    except ValueError:
        return None


def _trial_functional(cfg: ExperimentConfig, k: int):
    cost = cost_from_config(cfg.cost)
    rng = _rng(cfg, k)
    if cost.family == "weighted-product":
        return _trial_weighted_product(cfg, cost, k, rng)
    n = cost.n
    grid = _cartesian(cfg, n)
    ms = _measures(cfg, cost.N, n, k)
    exp = _exp_or_none(cost)
    alpha = tuple(float(a) for a in exp.alpha) if exp is not None else None
    tup = _source_tuple(cfg, cost, grid, rng, ms, alpha)
    tag = f"trial{k}"
    checks = []
    wanted = _checks_option(cfg, FUNCTIONAL_CHECKS)
    lebesgue = all(m.kind == "lebesgue" for m in ms)
    data = {}
    if "admissibility" in wanted:
        sl = admissibility_slack(tup, seed=k)
        checks.append(Check.geq(f"{tag}/admissibility", sl.min_slack, 0.0, _tol(cfg, "admissibility"),
                                witness={"point": sl.witness, "slack": sl.min_slack}))
    if "bound" in wanted:
        if not lebesgue:
            raise ValueError("the closed-form bound is for Lebesgue reference measures")
        val = bs_value(tup, ms)
        bound = reference_bound(cost)
        checks.append(Check.leq(f"{tag}/bs-value<=bound", val, bound * (1 + _tol(cfg, "bound")),
                                witness={"value": val, "bound": bound}))
        data["ratio"] = val / bound
    if "reference" in wanted and k == 0:
        ref = reference_tuple(cost, grid)
        checks.append(Check.close("reference/maximizer-value", bs_value(ref), reference_bound(cost),
                                  rtol=_tol(cfg, "reference")))
    if "stationarity" in wanted:
        rep = stationarity_check(tup, exp, ms, fit_exponents=False)
        checks.append(Check.close(f"{tag}/first-order", rep.sum_mean, rep.target,
                                  atol=_tol(cfg, "first_order")))
        checks.append(Check.close(f"{tag}/variance-identity", rep.weighted_variance, rep.target,
                                  rtol=_tol(cfg, "variance")))
    if "homogeneity" in wanted:
        res = grid_maximizer(tup, ms, size=int(cfg.options.get("size", 25)),
                             stride=cfg.options.get("stride"))
        for i, (e, b) in enumerate(zip(res.exponents, exp.beta)):
            checks.append(Check.close(f"{tag}/homogeneity-exponent-{i}", e, float(b),
                                      rtol=_tol(cfg, "homogeneity")))
        checks.append(Check.leq(f"{tag}/best-response-fixed-point", res.fixed_point_residual, 0.0,
                                _tol(cfg, "fixed_point")))
    return checks, data


def _trial_weighted_product(cfg, cost, k, rng):
    alpha = [float(a) for a in cost.params["alpha"]]
    N, n = cost.N, cost.n
    A = sum(1.0 / a for a in alpha)
    # Young: prod |x_i|^(1/alpha_i) <= sum (1/(alpha_i A)) lam_i |x_i|^A when prod lam_i^(1/(alpha_i A)) >= 1
    lam = np.ones(N) if k == 0 else np.exp(rng.normal(scale=0.4, size=N))
    w = np.array([1.0 / (a * A) for a in alpha])
    lam = lam / np.exp(np.dot(w, np.log(lam)))
    if k > 0:
        lam = lam * rng.uniform(1.0, 1.5)

    def make(lm):
        return lambda x: np.exp(-lm * np.sum(np.abs(x) ** A, axis=-1) / A)

    fs = [make(float(l)) for l in lam]
    m = _measures(cfg, 1, n)[0]
    rep = weighted_product_inequality_check(fs, WeightProfile.exponential(), alpha, m, seed=k,
                                            rtol=_tol(cfg, "weighted_product"))
    tag = f"trial{k}"
    checks = [
        Check.geq(f"{tag}/pointwise-constraint", rep.constraint_slack, 0.0, 1e-12,
                  witness={"point": rep.constraint_witness}),
        Check.truth(f"{tag}/measure-hypothesis", rep.measure_hypothesis_ok),
        Check.leq(f"{tag}/weighted-product-inequality", rep.lhs, rep.rhs * (1 + _tol(cfg, "weighted_product"))),
    ]
    if k == 0 and m.kind == "lebesgue":
        checks.append(Check.close(f"{tag}/equality-case", rep.lhs, rep.rhs, rtol=_tol(cfg, "weighted_product")))
    return checks, {}


def _source_bodies(cfg, cost, rng) -> BodyTuple:
    if cfg.source["type"] == "file":
        return load_body_tuple(cfg.resolve(cfg.source["path"]))
    return random_body_tuple(cost, _directions(cfg, cost.n), rng)


def _trial_sets(cfg: ExperimentConfig, k: int):
    cost = cost_from_config(cfg.cost)
    rng = _rng(cfg, k)
    bodies = _source_bodies(cfg, cost, rng)
    wanted = _checks_option(cfg, SET_CHECKS)
    tag = f"trial{k}"
    checks = []
    if "admissibility" in wanted:
        ex = set_admissibility_excess(bodies)
        checks.append(Check.leq(f"{tag}/set-admissibility", ex, 0.0, _tol(cfg, "admissibility")))
    if "lift" in wanted or "domination" in wanted:
        exp = exponents_from_cost(cost)
        grid = _cartesian(cfg, cost.n)
        lift = homogeneous_lift(bodies, exp, grid)
        if "lift" in wanted:
            sl = admissibility_slack(lift, seed=k)
            checks.append(Check.geq(f"{tag}/lift-admissibility", sl.min_slack, 0.0, _tol(cfg, "lift"),
                                    witness={"point": sl.witness, "slack": sl.min_slack}))
        if "domination" in wanted:
            top = bs_value(lift)
            chal = young_challengers(bodies, grid, rng, int(cfg.options.get("challengers", 20)), lift.alpha)
            vals = [bs_value(c) for c in chal]
            j = int(np.argmax(vals))
            checks.append(Check.leq(f"{tag}/lift-dominates-challengers", vals[j], top * (1 + _tol(cfg, "domination")),
                                    witness={"challenger": j}))
    if "layer-cake" in wanted:
        for i, K in enumerate(bodies.bodies):
            for beta in cfg.options.get("betas", [2, 3, 4]):
                lhs, rhs = layer_cake_check(K, float(beta))
                checks.append(Check.close(f"{tag}/layer-cake-body{i}-beta{beta}", lhs, rhs,
                                          rtol=_tol(cfg, "layer_cake")))
    return checks, {}


def _trial_transport(cfg: ExperimentConfig, k: int):
    cost = cost_from_config(cfg.cost)
    mode = cfg.options["mode"]
    S = int(cfg.options.get("max_support", 6))
    tag = f"trial{k}"
    checks = []
    if mode == "monotonicity":
        rng = _rng(cfg, k)
        prob = random_discrete_problem(cost, rng, S)
        V = random_admissible_potentials(prob, rng)
        rep = monotonicity_step(prob, V, seed=k)
        checks.append(Check.geq(f"{tag}/input-admissible", rep.slack_before, 0.0, 1e-9))
        tol = _tol(cfg, "monotonicity")
        checks.append(Check.leq(f"{tag}/bs-monotone", math.exp(rep.log_bs_before),
                                math.exp(rep.log_bs_after) * (1 + tol)))
        checks.append(Check.leq(f"{tag}/complementary-slackness", rep.cs_residual, 0.0,
                                _tol(cfg, "complementary_slackness")))
        return checks, {}
    # one problem per experiment; trials vary the measures
    prob_rng = np.random.default_rng([int(cfg.seed or 0), 10**6])
    prob = random_discrete_problem(cost, prob_rng, S, symmetric=True)
    Phi, _ = discrete_maximizer(prob, random_admissible_potentials(prob, prob_rng))
    rng = _rng(cfg, k)
    if mode == "entropy":
        nus = [rng.dirichlet(np.ones(len(s))) for s in prob.supports]
        rep = transport_entropy_check(prob, Phi, nus)
        checks.append(Check.leq(f"{tag}/transport-entropy", rep.k_min, rep.entropy_sum, _tol(cfg, "entropy")))
        if k == 0:
            same = transport_entropy_check(prob, Phi, prob.gibbs(Phi))
            checks.append(Check.leq("nu=mu/k-min", abs(same.k_min), 0.0, _tol(cfg, "entropy")))
            checks.append(Check.leq("nu=mu/entropy", abs(same.entropy_sum), 0.0, _tol(cfg, "entropy")))
        return checks, {}
    chal = [random_admissible_potentials(prob, rng) for _ in range(int(cfg.options.get("challengers", 4)))]
    rep = reverse_certificate(prob, Phi, chal)
    checks.append(Check.truth(f"{tag}/certificate-chain", rep.ok, witness={"tightest": rep.tightest}))
    checks.append(Check.leq(f"{tag}/chain-identity", max(rep.identity_residual), 0.0, 1e-8))
    return checks, {}


def _trial_sphere(cfg: ExperimentConfig, k: int):
    cost = cost_from_config(cfg.cost)
    exp = exponents_from_cost(cost)
    grid = _directions(cfg, cost.n)
    rng = _rng(cfg, k)
    tag = f"trial{k}"
    checks = []
    if cfg.options["mode"] == "reduction":
        P = random_profiles(grid, cost.N, rng, scale=(0.8, 1.1))
        tup = profile_lift(P, cost, exp, grid=_cartesian(cfg, cost.n))
        ratio = bs_value(tup) / spherical_bs_value(P, None, exp)
        checks.append(Check.close(f"{tag}/ratio-equals-constant", ratio, spherical_constant(exp),
                                  rtol=_tol(cfg, "ratio")))
        s_sph = spherical_constraint_slack(P, cost, exp=exp).min_slack
        s_ray = lifted_ray_slack(P, cost, exp, samples=20000, seed=k).min_slack
        agree = (s_sph >= -1e-9) == (s_ray >= -1e-9)
        checks.append(Check.truth(f"{tag}/slack-sign-equivalence", agree,
                                  witness={"spherical": s_sph, "lifted": s_ray}))
        return checks, {"ratio": ratio}
    P = make_feasible(random_profiles(grid, cost.N, rng), cost, exp)
    _, rep = spherical_transport_improve(P, cost, exp)
    tol = _tol(cfg, "improvement")
    checks.append(Check.geq(f"{tag}/value-improves", rep.value_after, rep.value_before, tol))
    checks.append(Check.geq(f"{tag}/output-feasible", rep.slack_after, 0.0, tol))
    checks.append(Check.truth(f"{tag}/output-even", rep.even))
    if k == 0:
        const = [SphericalProfile.constant(grid, 1.0) for _ in range(cost.N)]
        _, rc = spherical_transport_improve(const, cost, exp)
        for i, s in enumerate(rc.ratio_spread):
            checks.append(Check.leq(f"constant-profile/ratio-spread-{i}", s, 0.0, _tol(cfg, "ratio")))
        checks.append(Check.close("constant-profile/constant-product", rc.constant_product, 1.0,
                                  atol=_tol(cfg, "ratio")))
    return checks, {}


def _trial_symmetrize(cfg: ExperimentConfig, k: int):
    cost = cost_from_config(cfg.cost)
    rng = _rng(cfg, k)
    bodies = _source_bodies(cfg, cost, rng)
    ms = _measures(cfg, cost.N, cost.n, k)
    rtol = _tol(cfg, "measure")
    tag = f"trial{k}"
    checks = []
    last = cost.N - 1
    if cfg.options["mode"] == "step":
        axis = int(cfg.options.get("axis", k % cost.n))
        polar_before = c_polar_component(bodies, last)
        try:
            out, st = jii_symmetrize(bodies, axis, 0, last, ms, rtol=rtol)
        except AssertionError as exc:
            return [Check.truth(f"{tag}/step", False, witness={"error": str(exc)})], {}
        checks.append(Check.geq(f"{tag}/steiner-measure", st.measure_i1_after, st.measure_i1_before * (1 - rtol)))
        checks.append(Check.geq(f"{tag}/polar-measure", st.measure_i2_after, st.measure_i2_polar * (1 - rtol)))
        checks.append(Check.geq(f"{tag}/admissible-after", st.slack_after, 0.0, 1e-6))
        inc = section_average_inclusion(polar_before, out[last], axis)
        scale = float(np.max(out[last].radial))
        checks.append(Check.leq(f"{tag}/section-average-inclusion", inc, 0.0, _tol(cfg, "inclusion") * scale))
        return checks, {}
    try:
        _, rep = unconditionalize(bodies, ms, max_rounds=int(cfg.options.get("max_rounds", 8)), rtol=rtol)
    except AssertionError as exc:
        return [Check.truth(f"{tag}/sweep", False, witness={"error": str(exc)})], {"converged": False}
    checks.append(Check.geq(f"{tag}/value-nondecreasing", rep.value_after, rep.value_before * (1 - rtol)))
    for s in rep.steps:
        if s.measure_i1_after < s.measure_i1_before * (1 - rtol):
            checks.append(Check.geq(f"{tag}/step-measure", s.measure_i1_after, s.measure_i1_before * (1 - rtol)))
    return checks, {"converged": bool(rep.converged), "rounds": rep.rounds}


def _frac(v) -> Fraction:
    # strings such as "1/3" and integers both parse exactly
    return Fraction(v)


def _trial_exponents(cfg: ExperimentConfig, k: int):
    case = cfg.options["cases"][k]
    exp = exponents_from_cost([_frac(p) for p in case["p"]],
                              [_frac(r) for r in case["r"]] if "r" in case else None, int(case.get("n", 1)))
    tag = f"case{k}"
    checks = [Check.truth(f"{tag}/exact-arithmetic", exp.exact)]
    for name, res in exp.residuals().items():
        checks.append(Check.truth(f"{tag}/{name}-residual-zero", res == 0, witness={"residual": str(res)}))
    expect = case.get("expect", {})
    for key in ("alpha", "beta", "tau"):
        if key in expect:
            want = [_frac(v) for v in expect[key]]
            got = list(getattr(exp, key))
            checks.append(Check.truth(f"{tag}/{key}", got == want,
                                      witness={"got": [str(g) for g in got], "want": [str(w) for w in want]}))
    if "p" in expect:
        checks.append(Check.truth(f"{tag}/p", exp.p == _frac(expect["p"]), witness={"got": str(exp.p)}))
    if expect.get("beta_equals_A"):
        checks.append(Check.truth(f"{tag}/beta-equals-A", all(b == exp.A for b in exp.beta),
                                  witness={"beta": [str(b) for b in exp.beta], "A": str(exp.A)}))
    return checks, {}


_TRIALS = {
    "verify-functional": _trial_functional,
    "verify-sets": _trial_sets,
    "transport": _trial_transport,
    "sphere": _trial_sphere,
    "symmetrize": _trial_symmetrize,
    "exponents": _trial_exponents,
}


def _aggregate(cfg: ExperimentConfig, datas: list) -> list:
    out = []
    if cfg.kind == "symmetrize" and cfg.options.get("mode") == "sweep":
        rate = float(np.mean([d.get("converged", False) for d in datas]))
        out.append(Check.geq("aggregate/convergence-rate", rate, _tol(cfg, "convergence_rate")))
    if cfg.kind == "sphere" and cfg.options.get("mode") == "reduction" and len(datas) > 1:
        r = np.array([d["ratio"] for d in datas])
        out.append(Check.leq("aggregate/ratio-spread", float(np.ptp(r) / np.mean(r)), _tol(cfg, "ratio")))
    return out


def _run_trial(args):
    cfg, k = args
    try:
        checks, data = _TRIALS[cfg.kind](cfg, k)
        return checks, data, None
    except (ValueError, RuntimeError, AssertionError) as exc:
        return [], {}, f"trial {k}: {type(exc).__name__}: {exc}"


def _environment(cfg: ExperimentConfig) -> dict:
    from . import __version__

    env = {"config": cfg.to_dict(), "tolerances": {**DEFAULT_TOLERANCES, **cfg.tolerances},
           "package": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__}
    if cfg.cost:
        n = cfg.cost["n"]
        g = _cartesian(cfg, n)
        env["cartesian_grid"] = {"half_width": g.half_width, "points": g.points_per_axis}
        if n == 2:
            env["directions"] = _directions(cfg, n).count
    return env


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Run every trial (up to ``jobs`` worker processes) and assemble the report in trial order."""
    validate(cfg)
    count = len(cfg.options["cases"]) if cfg.kind == "exponents" else cfg.trials
    args = [(cfg, k) for k in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, args))
    else:
        results = [_run_trial(a) for a in args]
    report = Report(cfg.name, cfg.kind, environment=_environment(cfg))
    errors = []
    datas = []
    for checks, data, err in results:
        report.extend(checks)
        datas.append(data)
        if err:
            errors.append(err)
    if not errors:
        report.extend(_aggregate(cfg, datas))
    if errors:
        report.error = "; ".join(errors)
    return report
