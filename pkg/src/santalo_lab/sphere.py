"""The BS problem for homogeneous tuples, rewritten on the unit sphere.

A homogeneous tuple is described by positive even profiles ``phi_i`` on a
direction grid through ``Phi_i(t theta) = (p_i/beta_i) (t phi_i(theta))^beta_i``,
i.e. ``Phi_i = tau_i * gauge^beta_i`` of the star body with radial function
``1/phi_i``.  Admissibility becomes the product constraint
``c(theta_1, ..., theta_N) <= prod phi_i(theta_i)^p_i`` and the functional
becomes a product of spherical integrals of ``rho_i / phi_i^(n + r_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .costs import CostSpec
from .geometry import CartesianGrid, DirectionGrid, GridFunction, ReferenceMeasure, StarBody
from .transforms import BodyTuple, FunctionTuple, homogeneous_lift
from .transport import TransportError, cost_tensor, solve_max_exact

__all__ = [
    "SphericalProfile",
    "SlackResult",
    "spherical_constraint_slack",
    "lifted_ray_slack",
    "spherical_bs_value",
    "spherical_constant",
    "profile_lift",
    "ImprovementReport",
    "spherical_transport_improve",
]


@dataclass(eq=False)
class SphericalProfile:
    """Positive even function on a direction grid."""

    grid: DirectionGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.shape != (self.grid.count,):
            raise ValueError(f"profile has {v.size} values, grid has {self.grid.count}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("profile values must be positive and finite")
        vr = v[self.grid.antipode(np.arange(self.grid.count))]
        if np.max(np.abs(v - vr) / np.maximum(v, vr)) > 1e-9:
            raise ValueError("profile is not even")
        v = 0.5 * (v + vr)
        v.setflags(write=False)
        self.values = v

    @classmethod
    def constant(cls, grid: DirectionGrid, value: float = 1.0) -> "SphericalProfile":
        return cls(grid, np.full(grid.count, float(value)))

    @classmethod
    def from_body(cls, body: StarBody) -> "SphericalProfile":
        return cls(body.grid, 1.0 / body.radial)

    def to_body(self, convex: bool = False) -> StarBody:
        return StarBody(self.grid, 1.0 / self.values, convex)

    def scaled(self, t: float) -> "SphericalProfile":
        return SphericalProfile(self.grid, self.values * t)


def _profiles(profiles) -> list:
    out = list(profiles)
    grid = out[0].grid
    if any(p.grid != grid for p in out):
        raise ValueError("profiles must share one direction grid")
    return out


def _degrees(cost: CostSpec, exp=None) -> list:
    if exp is not None:
        return [float(v) for v in exp.p_marg]
    degs = cost.declared_degrees()
    if degs is None:
        raise ValueError(f"{cost.family} cost has no per-marginal degrees")
    return [float(d) for d in degs]


@dataclass
class SlackResult:
    min_slack: float
    witness: Optional[list]
    checked: int

    @property
    def feasible(self) -> bool:
        return self.min_slack >= 0.0


def _direction_tuples(counts, samples: int, seed: int, exhaustive_limit: int):
    total = int(np.prod(counts))
    if total <= exhaustive_limit:
        return np.indices(counts).reshape(len(counts), -1)
    rng = np.random.default_rng(seed)
    rand = np.stack([rng.integers(0, k, size=samples) for k in counts])
    # aligned tuples (all slots in the same direction) are always included
    diag = np.tile(np.arange(min(counts)), (len(counts), 1))
    return np.concatenate([diag, rand], axis=1)


def spherical_constraint_slack(profiles: Sequence[SphericalProfile], cost: CostSpec, samples: int = 200000,
                               seed: int = 0, exp=None, exhaustive_limit: int = 2 * 10**6,
                               tuples: Optional[np.ndarray] = None) -> SlackResult:
    """Minimum of ``prod phi_i(theta_i)^p_i - c(theta)`` over direction tuples.

    All tuples are checked when there are at most ``exhaustive_limit`` of
    them; otherwise aligned tuples plus ``samples`` random ones.  ``tuples``
    (shape ``(N, M)`` of direction indices) overrides the choice.
    """
    profs = _profiles(profiles)
    grid = profs[0].grid
    degs = _degrees(cost, exp)
    if tuples is None:
        tuples = _direction_tuples([grid.count] * cost.N, samples, seed, exhaustive_limit)
    dirs = grid.directions
    best, wit = math.inf, None
    step = 10**6
    for a in range(0, tuples.shape[1], step):
        t = tuples[:, a:a + step]
        c = cost.evaluate(*[dirs[t[i]] for i in range(cost.N)])
        prod = np.ones(t.shape[1])
        for i, (p, d) in enumerate(zip(profs, degs)):
            prod = prod * p.values[t[i]] ** d
        s = prod - c
        k = int(np.argmin(s))
        if s[k] < best:
            best = float(s[k])
            wit = [dirs[t[i, k]].tolist() for i in range(cost.N)]
    return SlackResult(best, wit, int(tuples.shape[1]))


def lifted_ray_slack(profiles: Sequence[SphericalProfile], cost: CostSpec, exp, samples: int = 200000,
                     seed: int = 0, exhaustive_limit: int = 2 * 10**6) -> SlackResult:
    """Admissibility slack of the lifted tuple, evaluated exactly on rays.

    Points are ``x_i = t_i theta_i`` with ``theta_i`` grid directions and
    radii ``t_i = s_i / phi_i(theta_i)``: ``s_i = 1`` (where the Hölder step
    is tight) and seeded log-normal perturbations of it.
    """
    profs = _profiles(profiles)
    grid = profs[0].grid
    beta = [float(b) for b in exp.beta]
    degs = [float(p) for p in exp.p_marg]
    tuples = _direction_tuples([grid.count] * cost.N, samples, seed, exhaustive_limit)
    rng = np.random.default_rng(seed + 1)
    dirs = grid.directions
    best, wit, checked = math.inf, None, 0
    step = 10**6
    for rep in range(3):
        for a in range(0, tuples.shape[1], step):
            t = tuples[:, a:a + step]
            m = t.shape[1]
            if rep == 0:
                s = np.ones((cost.N, m))
            else:
                s = np.exp(0.5 * rng.normal(size=(cost.N, m)))
            xs, total = [], np.zeros(m)
            for i, p in enumerate(profs):
                phi = p.values[t[i]]
                r = s[i] / phi
                xs.append(r[:, None] * dirs[t[i]])
                total = total + degs[i] / beta[i] * (r * phi) ** beta[i]
            sl = total - cost.evaluate(*xs)
            k = int(np.argmin(sl))
            checked += m
            if sl[k] < best:
                best = float(sl[k])
                wit = [x[k].tolist() for x in xs]
    return SlackResult(best, wit, checked)


def _sphere_densities(densities, N: int, grid: DirectionGrid) -> list:
    if densities is None:
        return [np.ones(grid.count)] * N
    out = []
    for d in densities:
        if isinstance(d, ReferenceMeasure):
            out.append(np.asarray(d(grid.directions), dtype=float))
        elif callable(d):
            out.append(np.asarray(d(grid.directions), dtype=float))
        else:
            out.append(np.asarray(d, dtype=float))
    return out


def _n_plus_r(exp) -> list:
    return [exp.n + float(r) for r in exp.r]


def spherical_bs_value(profiles: Sequence[SphericalProfile], densities, exp) -> float:
    """``prod_i (int rho_i / phi_i^(n + r_i) dtheta)^(1/alpha_i)`` by direction quadrature."""
    profs = _profiles(profiles)
    grid = profs[0].grid
    rho = _sphere_densities(densities, len(profs), grid)
    logv = 0.0
    for p, r, k, a in zip(profs, rho, _n_plus_r(exp), exp.alpha):
        val = float(np.sum(grid.weights * r / p.values ** k))
        logv += math.log(val) / float(a)
    return math.exp(logv)


def spherical_constant(exp) -> float:
    """Ratio between the BS value of the lifted tuple and the spherical functional.

    Each factor is ``int_0^inf exp(-a s^beta) s^(k-1) ds = Gamma(k/beta) / (beta a^(k/beta))``
    with ``a = alpha_i p_i / beta_i`` and ``k = n + r_i``, raised to ``1/alpha_i``.
    """
    logc = 0.0
    for a, p, b, k in zip(exp.alpha, exp.p_marg, exp.beta, _n_plus_r(exp)):
        a, p, b = float(a), float(p), float(b)
        coef = a * p / b
        logc += (math.lgamma(k / b) - math.log(b) - (k / b) * math.log(coef)) / a
    return math.exp(logc)


def profile_lift(profiles: Sequence[SphericalProfile], cost: CostSpec, exp,
                 grid: Optional[CartesianGrid] = None, interpolation: str = "nearest") -> FunctionTuple:
    """Homogeneous potentials ``Phi_i(t theta) = (p_i/beta_i) (t phi_i(theta))^beta_i`` on a grid.

    ``interpolation="nearest"`` keeps ``phi_i`` constant on the angular
    sector of each grid direction, so the lifted integrals match the
    direction quadrature of :func:`spherical_bs_value`; ``"polygon"`` uses
    the polygon through the points ``theta / phi(theta)``.
    """
    profs = _profiles(profiles)
    grid = grid or CartesianGrid.default(cost.n)
    if interpolation == "polygon":
        bodies = BodyTuple(tuple(p.to_body() for p in profs), cost)
        return homogeneous_lift(bodies, exp, grid)
    nodes = grid.nodes()
    dg = profs[0].grid
    norm = np.linalg.norm(nodes, axis=-1)
    k = dg.nearest(np.where(norm[..., None] > 0, nodes, 1.0))
    comps = []
    for p, tau, beta in zip(profs, exp.tau, exp.beta):
        g = norm * p.values[k]
        comps.append(GridFunction(grid, float(tau) * g ** float(beta)))
    return FunctionTuple(tuple(comps), cost, tuple(float(a) for a in exp.alpha))


# ---------------------------------------------------------------------------
# transport improvement
# ---------------------------------------------------------------------------


@dataclass
class ImprovementReport:
    value_before: float
    value_after: float
    slack_after: float
    cs_residual: float
    holder_budget: float
    ratios: list                 # psi_i / phi_i per direction
    ratio_spread: list           # (max - min)/mean of each ratio
    ratio_constants: list        # mean ratio per slot
    constant_product: float      # prod c_i^{p_i}
    even: bool
    ok: bool


def _min_oscillation_duals(C: np.ndarray, w: list, value: float, tol: float):
    """Among (near) optimal duals of ``max <C, gamma>``, one minimising ``sum_i (max u_i - min u_i)``."""
    N = C.ndim
    shape = C.shape
    fin = np.nonzero(np.isfinite(C.ravel()))[0]
    multi = np.unravel_index(fin, shape)
    nu = sum(shape)
    offs = np.concatenate([[0], np.cumsum(shape)[:-1]])
    nvar = nu + 2 * N  # u, then (hi_i, lo_i)
    # sum_i u_i(t_i) >= C(t)  ->  -sum u <= -C
    r = np.repeat(np.arange(fin.size), N)
    c = np.stack([multi[i] + offs[i] for i in range(N)], axis=1).ravel()
    A1 = sparse.csr_matrix((-np.ones(r.size), (r, c)), shape=(fin.size, nvar))
    b1 = -C.ravel()[fin]
    rows, cols, vals = [], [], []
    row = 0
    for i in range(N):
        for a in range(shape[i]):
            # u_i(a) - hi_i <= 0 ; lo_i - u_i(a) <= 0
            rows += [row, row, row + 1, row + 1]
            cols += [offs[i] + a, nu + 2 * i, nu + 2 * i + 1, offs[i] + a]
            vals += [1.0, -1.0, 1.0, -1.0]
            row += 2
    A2 = sparse.csr_matrix((vals, (rows, cols)), shape=(row, nvar))
    # dual objective stays optimal
    A3 = sparse.csr_matrix(np.concatenate([np.concatenate(w), np.zeros(2 * N)])[None, :])
    A = sparse.vstack([A1, A2, A3]).tocsr()
    obj = np.zeros(nvar)
    obj[nu::2] = 1.0
    obj[nu + 1::2] = -1.0
    # dual simplex occasionally stalls with an "unknown" status; the other
    # HiGHS methods and a slightly looser optimality row are tried in turn
    attempts = [("highs-ds", tol), ("highs-ipm", tol), ("highs", 10 * tol)]
    for method, slack in attempts:
        b = np.concatenate([b1, np.zeros(row), [value + slack]])
        res = linprog(obj, A_ub=A, b_ub=b, bounds=(None, None), method=method,
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        if res.status == 0:
            break
    else:
        raise TransportError(f"oscillation LP failed: {res.message}")
    x = res.x
    return [x[offs[i]:offs[i] + shape[i]] for i in range(N)]


def _polish_last(C: np.ndarray, u: list) -> list:
    N = C.ndim
    S = C.copy()
    for i in range(N - 1):
        s = [1] * N
        s[i] = -1
        S = S - u[i].reshape(s)
    last = S.reshape(-1, C.shape[-1]).max(axis=0)
    u = list(u)
    u[-1] = np.where(np.isfinite(last), np.maximum(u[-1], last), u[-1])
    return u


def spherical_transport_improve(profiles: Sequence[SphericalProfile], cost: CostSpec, exp,
                                densities=None, select: str = "min-oscillation", tol: float = 1e-9):
    """One transport improvement step for spherical profiles.

    Marginals are ``mu_i ~ rho_i / phi_i^(n + r_i)`` on the direction grid;
    the maximization problem for ``log c`` (tuples with ``c <= 0``
    forbidden) is solved exactly and ``psi_i = exp(u_i / p_i)`` is built
    from its duals.  With ``select="min-oscillation"`` a second LP picks,
    among optimal duals, the one with the least total oscillation; the
    duals are then averaged with their reflections.

    Returns
    -------
    (list of SphericalProfile, ImprovementReport)
    """
    profs = _profiles(profiles)
    grid = profs[0].grid
    N = len(profs)
    degs = [float(p) for p in exp.p_marg]
    slack = spherical_constraint_slack(profs, cost, exp=exp)
    if slack.min_slack < -tol:
        raise ValueError(f"profiles violate the product constraint (slack {slack.min_slack:.3g} at "
                         f"{slack.witness})")
    rho = _sphere_densities(densities, N, grid)
    kk = _n_plus_r(exp)
    mus = []
    for p, r, k in zip(profs, rho, kk):
        m = grid.weights * r / p.values ** k
        mus.append(m / m.sum())
    dirs = [grid.directions] * N
    craw = cost_tensor(cost, dirs)
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(craw > 0, np.log(np.where(craw > 0, craw, 1.0)), -np.inf)
    if not np.any(np.isfinite(C)):
        raise ValueError("cost is nonpositive on every direction tuple")
    coupling, pots = solve_max_exact(C, mus, dirs)
    u = pots.f
    if select == "min-oscillation":
        u = _min_oscillation_duals(C, mus, pots.dual, 1e-12 * max(1.0, abs(pots.dual)))
    elif select != "lp":
        raise ValueError(f"unknown dual selection {select!r}")
    neg = grid.antipode(np.arange(grid.count))
    u = [0.5 * (x + x[neg]) for x in u]
    u = _polish_last(C, u)
    psi = [SphericalProfile(grid, np.exp(x / d)) for x, d in zip(u, degs)]
    before = spherical_bs_value(profs, densities, exp)
    after = spherical_bs_value(psi, densities, exp)
    s_after = spherical_constraint_slack(psi, cost, exp=exp)
    # complementary slackness of the selected duals on the coupling support
    supp = coupling.weights > 1e-12
    tot = np.zeros(C.shape)
    for i in range(N):
        s = [1] * N
        s[i] = -1
        tot = tot + u[i].reshape(s)
    cs = float(np.max(np.abs((tot - C)[supp])))
    ratios = [q.values / p.values for q, p in zip(psi, profs)]
    spread = [float((r.max() - r.min()) / r.mean()) for r in ratios]
    consts = [float(r.mean()) for r in ratios]
    prod = float(np.prod([cst ** d for cst, d in zip(consts, degs)]))
    budget = float(sum(d / k for d, k in zip(degs, kk)))
    even = all(np.allclose(q.values, q.values[neg], rtol=1e-12, atol=0) for q in psi)
    ok = after >= before - tol and s_after.min_slack >= -tol and even
    rep = ImprovementReport(before, after, s_after.min_slack, cs, budget, ratios, spread, consts, prod,
                            even, bool(ok))
    return psi, rep
