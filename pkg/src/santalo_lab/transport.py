"""Discrete multimarginal optimal transport and the BS monotonicity/entropy checks.

Exact problems are solved as linear programs over the transport polytope
with HiGHS (dual simplex); the dual potentials come from the equality
constraint marginals and are then polished so that feasibility holds
exactly.  An entropic (log-domain iterative scaling) solver handles larger
instances approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import logsumexp, rel_entr

from .costs import CostSpec
from .geometry import ReferenceMeasure
from .transforms import FunctionTuple

__all__ = [
    "DiscreteMeasure",
    "Coupling",
    "Potentials",
    "DiscreteProblem",
    "TransportError",
    "cost_tensor",
    "solve_max_exact",
    "solve_min_exact",
    "solve_entropic",
    "entropy",
    "MonotonicityReport",
    "monotonicity_step",
    "monotonicity_check",
    "discrete_maximizer",
    "EntropyReport",
    "transport_entropy_check",
    "CertificateReport",
    "reverse_certificate",
    "problem_from_tuple",
    "grid_maximizer",
    "MaximizerResult",
    "scale_ratio_exponents",
]

MAX_DENSE = 10**6


class TransportError(RuntimeError):
    pass


@dataclass(eq=False)
class DiscreteMeasure:
    """Probability weights on distinct support points (shape ``(k, n)``)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ValueError("one weight per support point is required")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("support points must be distinct")
        self.points = pts
        self.weights = w

    @classmethod
    def normalized(cls, points, weights) -> "DiscreteMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())

    @property
    def size(self) -> int:
        return self.weights.size


@dataclass(eq=False)
class Coupling:
    """Dense ``k_1 x ... x k_N`` plan with the supports it lives on."""

    supports: list
    weights: np.ndarray

    def marginal(self, i: int) -> np.ndarray:
        axes = tuple(k for k in range(self.weights.ndim) if k != i)
        return self.weights.sum(axis=axes)

    def marginal_errors(self, marginals) -> list:
        return [float(np.max(np.abs(self.marginal(i) - np.asarray(m.weights if hasattr(m, "weights") else m))))
                for i, m in enumerate(marginals)]

    def support(self, threshold: float = 1e-12):
        return np.nonzero(self.weights > threshold)

    def triplets(self, threshold: float = 1e-15) -> list:
        idx = np.nonzero(self.weights > threshold)
        return [[int(v) for v in t] + [float(self.weights[t])] for t in zip(*idx)]


@dataclass(eq=False)
class Potentials:
    """Dual potentials ``f_i`` with primal/dual values and diagnostics."""

    f: list
    primal: float
    dual: float
    feasibility: float = 0.0        # min over tuples of sum f - c (max) or c - sum f (min)
    cs_residual: float = 0.0        # |sum f - c| on the coupling support
    perturbed: bool = False
    sense: str = "max"

    @property
    def gap(self) -> float:
        return self.dual - self.primal if self.sense == "max" else self.primal - self.dual


def cost_tensor(cost, supports: Sequence[np.ndarray]) -> np.ndarray:
    """Dense cost tensor from a :class:`CostSpec` (or pass-through for arrays)."""
    if not isinstance(cost, CostSpec):
        return np.asarray(cost, dtype=float)
    N = len(supports)
    args = []
    for i, s in enumerate(supports):
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        shape = [1] * N + [s.shape[1]]
        shape[i] = s.shape[0]
        args.append(s.reshape(shape))
    return cost.evaluate(*args)


def _weights(m) -> np.ndarray:
    return np.asarray(m.weights if hasattr(m, "weights") else m, dtype=float)


def _points(m, k):
    return m.points if hasattr(m, "points") else np.arange(k, dtype=float)[:, None]


def _c_transform_last(C: np.ndarray, f: list) -> np.ndarray:
    """``max over the other indices of C - sum_{i<N} f_i`` as a function of the last index."""
    N = C.ndim
    S = C.copy()
    for i in range(N - 1):
        shape = [1] * N
        shape[i] = -1
        S = S - f[i].reshape(shape)
    return S.reshape(-1, C.shape[-1]).max(axis=0)


def _tuple_sum(f: list, shape) -> np.ndarray:
    N = len(shape)
    total = np.zeros(shape)
    for i in range(N):
        s = [1] * N
        s[i] = -1
        total = total + f[i].reshape(s)
    return total


def _lp_max(C: np.ndarray, w: list):
    shape = C.shape
    N = C.ndim
    flat = C.ravel()
    var = np.nonzero(np.isfinite(flat))[0]
    if var.size == 0:
        raise TransportError("every tuple has cost -inf; no feasible coupling")
    multi = np.unravel_index(var, shape)
    rows, offsets = [], []
    off = 0
    for i in range(N):
        rows.append(multi[i] + off)
        offsets.append(off)
        off += shape[i]
    r = np.concatenate(rows)
    c = np.tile(np.arange(var.size), N)
    A = sparse.csr_matrix((np.ones(r.size), (r, c)), shape=(off, var.size))
    b = np.concatenate(w)
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    # presolve occasionally declares badly scaled (tiny-mass) instances infeasible
    for presolve in (True, False):
        res = linprog(-flat[var], A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds",
                      options={**opts, "presolve": presolve})
        if res.status == 0:
            break
    if res.status != 0:
        raise TransportError(f"LP failed: {res.message}")
    plan = np.zeros(flat.size)
    plan[var] = np.maximum(res.x, 0.0)
    y = np.asarray(res.eqlin.marginals)
    f = [-y[offsets[i]:offsets[i] + shape[i]] for i in range(N)]
    return plan.reshape(shape), f


def solve_max_exact(cost, marginals: Sequence, supports: Optional[Sequence] = None, seed: int = 0,
                    max_retries: int = 3):
    """Maximize ``sum c gamma`` over couplings of the marginals (exact LP).

    Parameters
    ----------
    cost : CostSpec or ndarray
        Cost family (evaluated on the supports) or a dense tensor of shape
        ``(k_1, ..., k_N)``; ``-inf`` entries are forbidden tuples.
    marginals : sequence of DiscreteMeasure or weight arrays

    Returns
    -------
    (Coupling, Potentials)
        Potentials ``f_i`` satisfy ``sum f_i >= c`` exactly; ``f_1..f_{N-1}``
        have minimum 0 and ``f_N`` is the c-transform of the others.
    """
    N = len(marginals)
    if N < 2:
        raise ValueError("need at least two marginals")
    w = [_weights(m) for m in marginals]
    for k, wi in enumerate(w):
        if abs(wi.sum() - 1.0) > 1e-9 or np.any(wi < 0):
            raise ValueError(f"marginal {k} is not a probability vector")
    if supports is None:
        supports = [_points(m, wi.size) for m, wi in zip(marginals, w)]
    C = cost_tensor(cost, supports)
    if C.shape != tuple(wi.size for wi in w):
        raise ValueError(f"cost tensor shape {C.shape} does not match marginal sizes")
    if C.size > MAX_DENSE:
        raise ValueError(f"dense problem has {C.size} tuples (> {MAX_DENSE})")
    if np.any(np.isnan(C)) or np.any(np.isposinf(C)):
        raise ValueError("cost tensor must be finite or -inf")
    rng = np.random.default_rng(seed)
    # masses below 1e-14 of the largest one make HiGHS report infeasibility;
    # they are dropped (and the rest renormalised) for the LP only
    ww = []
    for wi in w:
        wi = np.where(wi < 1e-14 * wi.max(), 0.0, wi)
        ww.append(wi / wi.sum())
    w_lp = ww
    perturbed = False
    for attempt in range(max_retries + 1):
        plan, f = _lp_max(C, ww)
        # gauge: f_1..f_{N-1} have minimum 0, then f_N is the exact c-transform
        f = [np.asarray(x, dtype=float) for x in f]
        for i in range(N - 1):
            shift = f[i].min()
            f[i] = f[i] - shift
        last = _c_transform_last(C, f)
        f[-1] = np.where(np.isfinite(last), last, f[-1])
        total = _tuple_sum(f, C.shape)
        fin = np.isfinite(C)
        slack = np.where(fin, total - C, np.inf)
        feas = float(slack.min())
        primal = float(np.sum(plan[fin] * C[fin]))
        dual = float(sum(np.dot(fi, wi) for fi, wi in zip(f, w)))
        supp = plan > 1e-12
        cs = float(np.max(np.abs(slack[supp]))) if supp.any() else 0.0
        scale = max(1.0, float(np.max(np.abs(C[fin]))))
        if abs(dual - primal) <= 1e-9 * scale and feas >= -1e-9 * scale:
            break
        if attempt == max_retries:
            raise TransportError(f"dual extraction failed: gap {dual - primal:.3g}, feasibility {feas:.3g}")
        # anti-degeneracy: multiplicative perturbation of the weights, renormalised
        perturbed = True
        ww = []
        for wi in w_lp:
            p = wi * (1.0 + 1e-10 * rng.uniform(-1.0, 1.0, size=wi.size))
            ww.append(p / p.sum())
    if perturbed:
        # the plan solved the perturbed marginals; report values against the requested ones
        primal = float(np.sum(plan[fin] * C[fin]))
    coupling = Coupling([np.asarray(s) for s in supports], plan)
    pots = Potentials(f, primal, dual, feas, cs, perturbed, "max")
    if pots.gap < -1e-9 * scale:
        raise AssertionError(f"weak duality violated: gap {pots.gap!r}")
    return coupling, pots


def solve_min_exact(cost, marginals: Sequence, supports: Optional[Sequence] = None, seed: int = 0):
    """Minimize ``sum c gamma``: the maximization problem for ``-c``.

    Returned potentials satisfy ``sum f_i <= c``; ``+inf`` cost entries are
    forbidden tuples.
    """
    w = [_weights(m) for m in marginals]
    if supports is None:
        supports = [_points(m, wi.size) for m, wi in zip(marginals, w)]
    C = cost_tensor(cost, supports)
    coupling, pots = solve_max_exact(-C, marginals, supports, seed)
    f = [-x for x in pots.f]
    return coupling, Potentials(f, -pots.primal, -pots.dual, pots.feasibility, pots.cs_residual,
                                pots.perturbed, "min")


# ---------------------------------------------------------------------------
# entropic solver
# ---------------------------------------------------------------------------


@dataclass
class EntropicResult:
    coupling: Coupling
    potentials: Potentials
    converged: bool
    iterations: int
    marginal_error: float


def solve_entropic(cost, marginals: Sequence, eps: float, max_iters: int = 10000,
                   marginal_tol: float = 1e-6, supports: Optional[Sequence] = None) -> EntropicResult:
    """Entropy-regularised maximization by multimarginal iterative scaling (log domain).

    The plan is ``prod_i nu_i * exp((c - sum_i f_i) / eps)``; each sweep
    refits ``f_i`` so that marginal ``i`` is exact.  Stops when the largest
    marginal error (sup norm) falls below ``marginal_tol``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    w = [_weights(m) for m in marginals]
    if supports is None:
        supports = [_points(m, wi.size) for m, wi in zip(marginals, w)]
    C = cost_tensor(cost, supports)
    N = C.ndim
    shape = C.shape
    with np.errstate(divide="ignore"):
        logw = [np.log(wi) for wi in w]
    base = C / eps
    for i in range(N):
        s = [1] * N
        s[i] = -1
        base = base + logw[i].reshape(s)
    f = [np.zeros(k) for k in shape]
    err = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        for i in range(N):
            L = base - _tuple_sum([fj if j != i else np.zeros_like(fj) for j, fj in enumerate(f)], shape) / eps
            axes = tuple(k for k in range(N) if k != i)
            lse = logsumexp(L, axis=axes)
            with np.errstate(invalid="ignore"):
                f[i] = np.where(w[i] > 0, eps * (lse - logw[i]), 0.0)
        logP = base - _tuple_sum(f, shape) / eps
        P = np.exp(logP)
        err = max(float(np.max(np.abs(P.sum(axis=tuple(k for k in range(N) if k != i)) - w[i])))
                  for i in range(N))
        if err < marginal_tol:
            break
    fin = np.isfinite(C)
    primal = float(np.sum(P[fin] * C[fin]))
    dual = float(sum(np.dot(fi, wi) for fi, wi in zip(f, w)))
    pots = Potentials(f, primal, dual, sense="max")
    return EntropicResult(Coupling([np.asarray(s) for s in supports], P), pots, err < marginal_tol, it, err)


def entropy(nu, mu) -> float:
    """Relative entropy ``sum nu log(nu/mu)`` (``+inf`` if ``nu`` charges a ``mu``-null point)."""
    a, b = _weights(nu), _weights(mu)
    if a.shape != b.shape:
        raise ValueError("measures must share one support")
    return float(np.sum(rel_entr(a, b)))


# ---------------------------------------------------------------------------
# discrete BS problems
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DiscreteProblem:
    """Reference masses ``m_i`` on finite supports, a cost and weights ``alpha``.

    The discrete BS functional of potentials ``V_i`` (arrays on the
    supports) is ``prod_i (sum_a exp(-alpha_i V_i(a)) m_i(a))^(1/alpha_i)``.
    """

    supports: list
    ref: list
    cost: object
    alpha: tuple

    def __post_init__(self):
        self.supports = [np.asarray(s, dtype=float).reshape(len(s), -1) for s in self.supports]
        self.ref = [np.asarray(r, dtype=float) for r in self.ref]
        self.alpha = tuple(float(a) for a in self.alpha)
        if not (len(self.supports) == len(self.ref) == len(self.alpha)):
            raise ValueError("supports, reference masses and weights must have one entry per marginal")
        if any(np.any(r <= 0) for r in self.ref):
            raise ValueError("reference masses must be positive")
        self._C = cost_tensor(self.cost, self.supports)

    @property
    def N(self) -> int:
        return len(self.supports)

    @property
    def C(self) -> np.ndarray:
        return self._C

    def gibbs(self, V: Sequence[np.ndarray]) -> list:
        out = []
        for v, r, a in zip(V, self.ref, self.alpha):
            logw = -a * np.asarray(v, dtype=float) + np.log(r)
            out.append(np.exp(logw - logsumexp(logw)))
        return out

    def log_bs(self, V: Sequence[np.ndarray]) -> float:
        return float(sum(logsumexp(-a * np.asarray(v, dtype=float) + np.log(r)) / a
                         for v, r, a in zip(V, self.ref, self.alpha)))

    def slack(self, V: Sequence[np.ndarray]) -> float:
        total = _tuple_sum([np.asarray(v, dtype=float) for v in V], self.C.shape)
        fin = np.isfinite(self.C)
        return float(np.min(np.where(fin, total - self.C, np.inf)))

    @property
    def exchangeable(self) -> bool:
        """Equal supports, masses and weights, and a cost invariant under swapping slots."""
        if "_exch" not in self.__dict__:
            s0, r0 = self.supports[0], self.ref[0]
            ok = all(s.shape == s0.shape and np.array_equal(s, s0) for s in self.supports) and \
                all(np.array_equal(r, r0) for r in self.ref) and len(set(self.alpha)) == 1
            if ok:
                C = self.C
                for k in range(1, self.N):
                    T = np.swapaxes(C, 0, k)
                    same_inf = np.array_equal(np.isinf(C), np.isinf(T))
                    fin = np.isfinite(C)
                    if not same_inf or np.max(np.abs(C[fin] - T[fin]), initial=0.0) > 1e-12:
                        ok = False
                        break
            self.__dict__["_exch"] = ok
        return self.__dict__["_exch"]

    def negation_index(self, i: int) -> Optional[np.ndarray]:
        """Index of ``-x`` in support ``i`` (None if the support is not symmetric)."""
        s = self.supports[i]
        out = np.empty(s.shape[0], dtype=np.int64)
        for a in range(s.shape[0]):
            d = np.max(np.abs(s + s[a]), axis=1)
            b = int(np.argmin(d))
            if d[b] > 1e-12:
                return None
            out[a] = b
        return out

    def c_transform(self, V: Sequence[np.ndarray], i: int) -> np.ndarray:
        N = self.N
        S = self.C.copy()
        for j in range(N):
            if j == i:
                continue
            s = [1] * N
            s[j] = -1
            S = S - np.asarray(V[j], dtype=float).reshape(s)
        axes = tuple(k for k in range(N) if k != i)
        return S.max(axis=axes)


def problem_from_tuple(tup: FunctionTuple, measures=None, size: int = 9, stride: Optional[int] = None):
    """Discrete problem on symmetric subsets of grid nodes, with quadrature masses.

    Returns ``(problem, V)`` where ``V`` are the tuple's values on the
    chosen nodes.  Nodes are ``size`` equally spaced (odd) indices per axis
    around the origin, restricted to finite values of every component.
    """
    grid = tup.grid
    G = grid.points_per_axis
    centre = (G - 1) // 2
    if size % 2 == 0:
        raise ValueError("size must be odd (symmetric subsets)")
    if stride is None:
        stride = max(1, centre // ((size - 1) // 2) // 2)
    half = (size - 1) // 2
    ax_idx = centre + stride * np.arange(-half, half + 1)
    if ax_idx.min() < 0 or ax_idx.max() >= G:
        raise ValueError("subsample does not fit in the grid")
    if measures is None:
        measures = [ReferenceMeasure.lebesgue(grid.dim)] * tup.N
    mesh = np.stack(np.meshgrid(*([ax_idx] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    supports, ref, vals = [], [], []
    for V, m in zip(tup.components, measures):
        v = V.values[tuple(mesh.T)]
        keep = np.isfinite(v)
        pts = grid.axis[mesh[keep]]
        dens = np.ones(pts.shape[0]) if m.kind == "lebesgue" else m(pts)
        vol = (stride * grid.spacing) ** grid.dim
        supports.append(pts)
        ref.append(dens * vol)
        vals.append(v[keep])
    return DiscreteProblem(supports, ref, tup.cost, tup.alpha), vals


@dataclass
class MonotonicityReport:
    log_bs_before: float
    log_bs_after: float
    ok: bool
    cs_residual: float
    slack_before: float
    duals: list
    perturbed: bool = False

    @property
    def ratio(self) -> float:
        return math.exp(self.log_bs_after - self.log_bs_before)


def _symmetrize_duals(prob: DiscreteProblem, f: list, exchange: bool = False) -> list:
    """Average potentials with their reflections and restore feasibility through the last slot.

    With ``exchange=True`` (exchangeable problem, equal marginals) the
    potentials are also averaged over slots; for a cost invariant under
    permuting its arguments this keeps feasibility and the dual value.
    """
    out = []
    for i, fi in enumerate(f):
        neg = prob.negation_index(i)
        # reflection averaging is only sound when the reference masses are even too
        if neg is not None and not np.allclose(prob.ref[i][neg], prob.ref[i], rtol=1e-12, atol=0.0):
            neg = None
        out.append(fi if neg is None else 0.5 * (fi + fi[neg]))
    if exchange:
        g = sum(out) / len(out)
        # feasibility holds up to rounding; raise every slot alike to keep them equal
        g = np.maximum(g, prob.c_transform([g] * prob.N, prob.N - 1))
        return [g.copy() for _ in out]
    out[-1] = np.maximum(out[-1], prob.c_transform(out, prob.N - 1))
    return out


def monotonicity_step(prob: DiscreteProblem, V: Sequence[np.ndarray], symmetrize=False,
                      seed: int = 0) -> MonotonicityReport:
    """One transport improvement: duals of the OT problem between the Gibbs measures of ``V``.

    ``symmetrize`` is ``False``, ``True`` (reflection/exchange averaging of
    the duals, kept only if the value does not drop) or ``"always"``.
    """
    V = [np.asarray(v, dtype=float) for v in V]
    slack = prob.slack(V)
    nus = prob.gibbs(V)
    coupling, pots = solve_max_exact(prob.C, nus, prob.supports, seed=seed)
    f = pots.f
    if symmetrize:
        same = prob.exchangeable and all(np.array_equal(V[0], v) for v in V[1:])
        g = _symmetrize_duals(prob, f, exchange=same)
        # the discrete value is convex in the potentials, so its maximizer need
        # not be even; unless forced, averaging is kept only when it does not lose value
        if symmetrize == "always" or prob.log_bs(g) >= prob.log_bs(f):
            f = g
    before, after = prob.log_bs(V), prob.log_bs(f)
    ok = slack >= -1e-9 and after >= before + math.log1p(-1e-9) and pots.cs_residual < 1e-9
    return MonotonicityReport(before, after, bool(ok), pots.cs_residual, slack, f, pots.perturbed)


def _ascend(prob: DiscreteProblem, V, max_iters: int, tol: float, symmetrize):
    V = [np.asarray(v, dtype=float) for v in V]
    trace = [prob.log_bs(V)]
    for _ in range(max_iters):
        rep = monotonicity_step(prob, V, symmetrize=symmetrize)
        V = rep.duals
        trace.append(rep.log_bs_after)
        if abs(trace[-1] - trace[-2]) < tol:
            break
    return V, trace


def discrete_maximizer(prob: DiscreteProblem, V0: Sequence[np.ndarray], max_iters: int = 200,
                       tol: float = 1e-13, symmetrize=True, restarts: int = 16, seed: int = 0):
    """Iterate the transport improvement map until the BS value stops increasing.

    The ascent stops at fixed points of the improvement map, and the
    discrete value (a convex function of the potentials) can have several.
    ``restarts`` further ascents from seeded random admissible starts are
    run and the best fixed point is kept.

    Returns ``(Phi, trace)``; ``trace`` is the log-BS sequence of the
    ascent that produced ``Phi``, which is dual-optimal for its own Gibbs
    measures to the accuracy ``tol``.
    """
    best = _ascend(prob, V0, max_iters, tol, symmetrize)
    if restarts:
        rng = np.random.default_rng([seed, 7919])
        spread = float(np.ptp(prob.C[np.isfinite(prob.C)])) or 1.0
        for _ in range(restarts):
            V = [rng.normal(scale=spread, size=len(s)) for s in prob.supports]
            V[-1] = prob.c_transform(V, prob.N - 1)
            cand = _ascend(prob, V, max_iters, tol, symmetrize)
            if cand[1][-1] > best[1][-1] + 1e-12:
                best = cand
    return best


def monotonicity_check(tup, measures=None, size: int = 9, stride: Optional[int] = None,
                       V: Optional[Sequence[np.ndarray]] = None) -> MonotonicityReport:
    """Transport improvement check for a grid tuple (subsampled) or a :class:`DiscreteProblem`.

    Asserts ``BS(V) <= BS(Phi) (1 + 1e-9)`` with both sides on the same
    discrete supports and complementary slackness below 1e-9.
    """
    if isinstance(tup, DiscreteProblem):
        if V is None:
            raise ValueError("pass V with a DiscreteProblem")
        prob = tup
    else:
        prob, V = problem_from_tuple(tup, measures, size, stride)
    return monotonicity_step(prob, V)


# ---------------------------------------------------------------------------
# transport-entropy inequality and its converse
# ---------------------------------------------------------------------------


@dataclass
class EntropyReport:
    k_min: float
    entropy_sum: float
    ok: bool
    min_d: float


def transport_entropy_check(prob: DiscreteProblem, Phi: Sequence[np.ndarray], nus: Sequence,
                            exp=None, tol: float = 1e-9) -> EntropyReport:
    """``K_min_d(nu) <= sum_i Ent_{mu_i}(nu_i)/alpha_i`` with ``d = sum Phi_i - c``."""
    Phi = [np.asarray(p, dtype=float) for p in Phi]
    alpha = prob.alpha if exp is None else tuple(float(a) for a in exp.alpha)
    d = _tuple_sum(Phi, prob.C.shape) - prob.C
    min_d = float(np.min(d[np.isfinite(d)]))
    if min_d < -1e-9:
        raise ValueError(f"Phi is not admissible on the supports (min d = {min_d:.3g})")
    mus = prob.gibbs(Phi)
    nus = [_weights(v) for v in nus]
    ent = sum(entropy(v, m) / a for v, m, a in zip(nus, mus, alpha))
    if math.isinf(ent):
        return EntropyReport(math.nan, ent, True, min_d)
    _, pots = solve_min_exact(d, nus, prob.supports)
    return EntropyReport(pots.primal, ent, bool(pots.primal <= ent + tol), min_d)


@dataclass
class CertificateReport:
    log_bs_phi: float
    log_bs_challengers: list
    chain_lhs: list          # sum int (Phi - V) d nu
    k_min: list
    entropy_sum: list
    identity_residual: list  # |entropy_sum - chain_lhs - log ratio|
    ok: bool
    tightest: int
    rejected: list = field(default_factory=list)


def reverse_certificate(prob: DiscreteProblem, Phi: Sequence[np.ndarray], challengers: Sequence,
                        exp=None, tol: float = 1e-9) -> CertificateReport:
    """Certify ``BS(V) <= BS(Phi)`` for each admissible challenger through the transport chain."""
    Phi = [np.asarray(p, dtype=float) for p in Phi]
    d = _tuple_sum(Phi, prob.C.shape) - prob.C
    mus = prob.gibbs(Phi)
    lphi = prob.log_bs(Phi)
    out = CertificateReport(lphi, [], [], [], [], [], True, -1)
    best = -math.inf
    for k, V in enumerate(challengers):
        V = [np.asarray(v, dtype=float) for v in V]
        s = prob.slack(V)
        if s < -1e-9:
            out.rejected.append((k, s))
            continue
        nus = prob.gibbs(V)
        lhs = float(sum(np.dot(p - v, nu) for p, v, nu in zip(Phi, V, nus)))
        _, pots = solve_min_exact(d, nus, prob.supports)
        ent = float(sum(entropy(nu, mu) / a for nu, mu, a in zip(nus, mus, prob.alpha)))
        lv = prob.log_bs(V)
        out.log_bs_challengers.append(lv)
        out.chain_lhs.append(lhs)
        out.k_min.append(pots.primal)
        out.entropy_sum.append(ent)
        out.identity_residual.append(abs(ent - lhs - (lphi - lv)))
        ok = lhs <= pots.primal + tol and pots.primal <= ent + tol and lv <= lphi + tol
        out.ok = out.ok and ok
        if lv > best:
            best = lv
            out.tightest = k
    return out


# ---------------------------------------------------------------------------
# grid maximizer search
# ---------------------------------------------------------------------------


def scale_ratio_exponents(points: np.ndarray, values: np.ndarray, lo: float, hi: float) -> float:
    """Mean of ``log2((V(2x) - V(0)) / (V(x) - V(0)))`` over support points with ``lo <= |x|, |2x| <= hi``.

    For a function homogeneous of degree ``beta`` after subtracting its value
    at the origin every ratio equals ``beta``.
    """
    pts = np.asarray(points, dtype=float).reshape(len(values), -1)
    vals = np.asarray(values, dtype=float)
    r = np.linalg.norm(pts, axis=1)
    zero = np.nonzero(r < 1e-12)[0]
    if zero.size == 0:
        raise ValueError("support does not contain the origin")
    base = vals[zero[0]]
    index = {tuple(np.round(p, 9)): k for k, p in enumerate(pts)}
    out = []
    for k, p in enumerate(pts):
        if not (lo <= r[k] and 2 * r[k] <= hi):
            continue
        j = index.get(tuple(np.round(2 * p, 9)))
        if j is None:
            continue
        a, b = vals[k] - base, vals[j] - base
        if a > 0 and b > 0 and np.isfinite(a) and np.isfinite(b):
            out.append(math.log2(b / a))
    if not out:
        raise ValueError("no support point pairs (x, 2x) in the fitting range")
    return float(np.mean(out))


@dataclass
class MaximizerResult:
    problem: DiscreteProblem
    potentials: list              # discrete maximizer on the supports
    trace: list                   # discrete log-BS values per transport step
    exponents: list               # scale-ratio exponents of the potentials
    fixed_point_residual: float   # best-response change where the Gibbs mass is not negligible


def grid_maximizer(tup: FunctionTuple, measures=None, size: int = 25, stride: Optional[int] = None,
                   max_iters: int = 200, fit_range: tuple = (0.5, 2.5)) -> MaximizerResult:
    """Approximate maximizer by transport ascent on a symmetric node subsample.

    The transport improvement map is iterated on ``size`` nodes per axis
    (:func:`discrete_maximizer`).  Best-response sweeps alone cannot do
    this: every c-conjugate tuple is one of their fixed points.  The result
    is checked to be a best-response fixed point on the support where its
    Gibbs measures carry mass.  Start from identical components so that an
    exchangeable problem (equal supports, symmetric cost) stays balanced
    across slots.
    """
    prob, v = problem_from_tuple(tup, measures, size, stride)
    # the quadrature problem stands in for a continuum one whose maximizer is
    # even and balanced, so averaging is always applied here
    Phi, trace = discrete_maximizer(prob, v, max_iters=max_iters, symmetrize="always", restarts=0)
    exps = [scale_ratio_exponents(prob.supports[i], Phi[i], *fit_range) for i in range(tup.N)]
    mus = prob.gibbs(Phi)
    res = 0.0
    for i in range(prob.N):
        live = mus[i] > 1e-12
        res = max(res, float(np.max(np.abs(Phi[i] - prob.c_transform(Phi, i))[live])))
    return MaximizerResult(prob, Phi, trace, exps, res)
