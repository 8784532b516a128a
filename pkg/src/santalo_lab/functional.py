"""The generalized BS functional, its exponent system and first/second order checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .costs import CostSpec, detect_multi_homogeneity
from .geometry import (
    CartesianGrid,
    GridFunction,
    ReferenceMeasure,
    StarBody,
    gauge_eval,
    integrate_exp,
    measure_of_body,
    node_weights,
)
from .transforms import BodyTuple, FunctionTuple

__all__ = [
    "ExponentSystem",
    "exponents_from_cost",
    "SlackReport",
    "admissibility_slack",
    "bs_value",
    "log_bs_value",
    "bs_set_value",
    "StationarityReport",
    "stationarity_check",
    "fit_homogeneity_exponent",
    "WeightProfile",
    "WeightedProductReport",
    "weighted_product_inequality_check",
    "layer_cake_check",
]


def _exact(v):
    """Fractions stay exact, ints become Fractions, floats stay floats."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    return float(v)


# ---------------------------------------------------------------------------
# exponent system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentSystem:
    """Weights and homogeneity exponents tied together by the consistency conditions.

    ``alpha_i = (n + r_i) / (n p_i)``, ``A = sum 1/alpha_i``,
    ``beta_i = A (1 + r_i/n)``, ``tau_i = (1/alpha_i) / A`` and the joint
    degree ``p = sum(beta_i/alpha_i) / A``.  Entries are
    :class:`fractions.Fraction` when the inputs are rational.
    """

    N: int
    n: int
    r: tuple
    p_marg: tuple
    alpha: tuple
    beta: tuple
    tau: tuple
    p: object
    A: object

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.alpha + self.beta + self.r + self.p_marg)

    def degree_residual(self):
        num = sum((self.n + r) / a for r, a in zip(self.r, self.alpha))
        den = sum((self.n + r) / (a * b) for r, a, b in zip(self.r, self.alpha, self.beta))
        return abs(self.p - num / den)

    def balance_residual(self):
        q = [(self.n + r) / b for r, b in zip(self.r, self.beta)]
        return max(abs(x - y) for x in q for y in q)

    def holder_residual(self):
        return abs(sum(pi / b for pi, b in zip(self.p_marg, self.beta)) - 1)

    def residuals(self) -> dict:
        return {"degree": self.degree_residual(), "balance": self.balance_residual(),
                "holder": self.holder_residual()}

    def assert_consistent(self, tol: float = 1e-12):
        for name, res in self.residuals().items():
            if res != 0 and float(res) >= tol:
                raise ValueError(f"inconsistent exponent system: {name} residual {float(res):.3g}")

    def scaling_exponent(self):
        """Exponent of ``t`` in the value of ``V_i(t^{1 - p/beta_i} x)``; zero when consistent."""
        return sum((self.n + r) / a * (self.p / b - 1) for r, a, b in zip(self.r, self.alpha, self.beta))

    def as_floats(self) -> dict:
        f = lambda seq: [float(v) for v in seq]
        return {"N": self.N, "n": self.n, "r": f(self.r), "p_i": f(self.p_marg), "alpha": f(self.alpha),
                "beta": f(self.beta), "tau": f(self.tau), "p": float(self.p), "A": float(self.A)}


def exponents_from_cost(p_marg, r=None, n: int = 1) -> ExponentSystem:
    """Exponent system from per-marginal cost degrees and density degrees.

    ``p_marg`` may be a list of degrees or a :class:`CostSpec`, in which case
    the degrees are detected by sampling.  Costs without per-marginal
    degrees (such as the barycentric one) are refused.
    """
    if isinstance(p_marg, CostSpec):
        cost = p_marg
        n = cost.n
        degs = cost.declared_degrees()
        if degs is None:
            rep = detect_multi_homogeneity(cost)
            degs = rep.degrees
        if degs is None:
            raise ValueError(f"{cost.family} cost is not multi-homogeneous; no exponent system exists")
        p_marg = degs
    p_marg = tuple(_exact(v) for v in p_marg)
    N = len(p_marg)
    r = tuple(_exact(v) for v in (r if r is not None else [0] * N))
    if len(r) != N:
        raise ValueError("need one density degree per marginal")
    if n < 1 or any(v <= 0 for v in p_marg) or any(v < 0 for v in r):
        raise ValueError("need n >= 1, p_i > 0 and r_i >= 0")
    nn = Fraction(n)
    alpha = tuple((nn + ri) / (nn * pi) for ri, pi in zip(r, p_marg))
    A = sum(1 / a for a in alpha)
    beta = tuple(A * (1 + ri / nn) for ri in r)
    tau = tuple((1 / a) / A for a in alpha)
    p = sum(b / a for b, a in zip(beta, alpha)) / A
    sys = ExponentSystem(N, n, r, p_marg, alpha, beta, tau, p, A)
    sys.assert_consistent()
    return sys


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


@dataclass
class SlackReport:
    min_slack: float
    witness: Optional[list]
    checked: int

    @property
    def admissible(self) -> bool:
        return self.min_slack >= 0.0


def _sign_patterns(N: int):
    for mask in range(2 ** (N - 1)):
        yield np.array([1.0] + [(-1.0 if mask >> b & 1 else 1.0) for b in range(N - 1)])


def admissibility_slack(tup: FunctionTuple, samples: int = 20000, seed: int = 0,
                        points: Optional[Sequence[np.ndarray]] = None) -> SlackReport:
    """Minimum of ``sum V_i(x_i) - c(x)`` over sampled node tuples.

    The sample contains every aligned tuple ``x_1 = +-x_2 = ... = +-x_N`` over
    the grid nodes, then ``samples`` random node tuples.  Passing ``points``
    (a list of ``N`` index arrays of shape ``(M, n)``) replaces the sample.
    """
    grid = tup.grid
    G = grid.points_per_axis
    n = grid.dim
    if points is None:
        nodes = np.indices(grid.shape).reshape(n, -1).T
        idx = [[] for _ in range(tup.N)]
        for s in _sign_patterns(tup.N):
            for k in range(tup.N):
                mirrored = nodes if s[k] > 0 else (G - 1) - nodes
                idx[k].append(mirrored)
        rng = np.random.default_rng(seed)
        for k in range(tup.N):
            idx[k].append(rng.integers(0, G, size=(samples, n)))
        idx = [np.concatenate(v) for v in idx]
    else:
        idx = [np.asarray(v, dtype=np.int64).reshape(-1, n) for v in points]
    axis = grid.axis
    xs = [axis[v] for v in idx]
    total = np.zeros(idx[0].shape[0])
    for V, v in zip(tup.components, idx):
        total = total + V.values[tuple(v.T)]
    c = tup.cost.evaluate(*xs)
    with np.errstate(invalid="ignore"):
        slack = np.where(np.isinf(total), np.inf, total - c)
    k = int(np.argmin(slack))
    return SlackReport(float(slack[k]), [x[k].tolist() for x in xs], int(slack.size))


# ---------------------------------------------------------------------------
# functional values
# ---------------------------------------------------------------------------


def _measures(measures, N, dim):
    if measures is None:
        return [ReferenceMeasure.lebesgue(dim)] * N
    if isinstance(measures, ReferenceMeasure):
        return [measures] * N
    measures = list(measures)
    if len(measures) != N:
        raise ValueError(f"need {N} measures, got {len(measures)}")
    return measures


def log_bs_value(tup: FunctionTuple, measures=None) -> float:
    ms = _measures(measures, tup.N, tup.grid.dim)
    total = 0.0
    for i, (V, a, m) in enumerate(zip(tup.components, tup.alpha, ms)):
        val = integrate_exp(V, float(a), m)
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"factor {i} of the BS functional is {val!r}")
        total += math.log(val) / float(a)
    return total


def bs_value(tup: FunctionTuple, measures=None) -> float:
    """``prod_i (int exp(-alpha_i V_i) dm_i)^(1/alpha_i)`` by grid quadrature."""
    return math.exp(log_bs_value(tup, measures))


def bs_set_value(bodies, alpha, measures=None) -> float:
    """``prod_i m_i(K_i)^(1/alpha_i)`` by polar quadrature."""
    seq = bodies.bodies if isinstance(bodies, BodyTuple) else tuple(bodies)
    ms = _measures(measures, len(seq), seq[0].dim)
    if len(alpha) != len(seq):
        raise ValueError("need one weight per body")
    logv = 0.0
    for i, (K, a, m) in enumerate(zip(seq, alpha, ms)):
        v = measure_of_body(K, m)
        if v <= 0:
            raise ValueError(f"body {i} has zero measure")
        logv += math.log(v) / float(a)
    return math.exp(logv)


# ---------------------------------------------------------------------------
# stationarity
# ---------------------------------------------------------------------------


def _density(grid: CartesianGrid, m: ReferenceMeasure) -> np.ndarray:
    return np.ones(grid.shape) if m.kind == "lebesgue" else m(grid.nodes())


def _probability_weights(V: GridFunction, alpha: float, m: ReferenceMeasure) -> np.ndarray:
    mask = V.finite_mask
    vals = np.where(mask, V.values, 0.0)
    shift = float(np.min(vals[mask]))
    f = np.where(mask, np.exp(-alpha * (vals - shift)), 0.0) * _density(V.grid, m)
    w = node_weights(V.grid, mask) * f
    s = w.sum()
    if not s > 0:
        raise ValueError("probability normalization failed (zero mass)")
    return w / s


def fit_homogeneity_exponent(V: GridFunction, base_radius: float = 1.0, scales: int = 9,
                             directions: int = 16) -> float:
    """Log-log slope of ``V(t theta) - V(0)`` over ``t`` in ``base_radius * [1/4, 4]``.

    Points within two grid spacings of the origin or outside the box are
    dropped; the slope is averaged over directions.
    """
    grid = V.grid
    ts = base_radius * np.geomspace(0.25, 4.0, scales)
    ts = ts[(ts > 2 * grid.spacing) & (ts <= grid.half_width)]
    if ts.size < 3:
        raise ValueError("not enough usable scales inside the grid")
    v0 = V.at_zero()
    if grid.dim == 1:
        dirs = np.array([[1.0]])
    else:
        a = np.pi * np.arange(directions) / directions  # evenness covers the other half
        dirs = np.column_stack([np.cos(a), np.sin(a)])
        # keep the whole scale range inside the box
        ts = ts[ts * 1.0 <= grid.half_width]
    slopes = []
    for d in dirs:
        pts = ts[:, None] * d[None, :]
        inside = np.all(np.abs(pts) <= grid.half_width, axis=1)
        vals = V.interpolate(pts[inside]) - v0
        tt = ts[inside]
        ok = np.isfinite(vals) & (vals > 0)
        if ok.sum() < 3:
            continue
        slope = np.polyfit(np.log(tt[ok]), np.log(vals[ok]), 1)[0]
        slopes.append(slope)
    if not slopes:
        raise ValueError("no direction had enough positive samples")
    return float(np.mean(slopes))


@dataclass
class StationarityReport:
    """First/second order diagnostics of a candidate maximizer.

    ``first_order_residual = sum_mean - target``; ``second_order_gap =
    target - weighted_variance`` (must be >= 0 at a maximizer).  Coupling
    fields are None when no coupling was supplied.
    """

    sum_mean: float
    target: float
    means: list
    variances: list
    weighted_variance: float
    first_order_residual: float
    second_order_gap: float
    exponents: list
    coupling_cost_mean: Optional[float] = None
    coupling_cost_variance: Optional[float] = None
    variance_bound: Optional[float] = None
    third_order_gap: Optional[float] = None
    equality_residual: Optional[float] = None


def stationarity_check(tup: FunctionTuple, exp: ExponentSystem, measures=None, coupling=None,
                       base_radius: float = 1.0, fit_exponents: bool = True) -> StationarityReport:
    """Mean, variance and homogeneity diagnostics of ``tup`` as a candidate maximizer.

    Parameters
    ----------
    coupling : optional
        ``(support_indices, weights)`` with ``support_indices`` a list of
        ``N`` integer arrays of node indices (shape ``(M, n)``) and
        ``weights`` of length ``M`` summing to one, or a
        :class:`santalo_lab.transport.Coupling` whose supports are node
        coordinates of the grid.
    """
    ms = _measures(measures, tup.N, tup.grid.dim)
    means, variances = [], []
    for V, a, m in zip(tup.components, tup.alpha, ms):
        w = _probability_weights(V, float(a), m)
        vals = np.where(V.finite_mask, V.values, 0.0)
        mu = float(np.sum(w * vals))
        means.append(mu)
        variances.append(float(np.sum(w * (vals - mu) ** 2)))
    alpha = [float(a) for a in tup.alpha]
    target = float(sum((exp.n + r) / (exp.p * a) for r, a in zip(exp.r, exp.alpha)))
    sum_mean = float(sum(means))
    wvar = float(sum(a * v for a, v in zip(alpha, variances)))
    exps = []
    if fit_exponents:
        for V in tup.components:
            try:
                exps.append(fit_homogeneity_exponent(V, base_radius))
            except ValueError:
                exps.append(float("nan"))
    rep = StationarityReport(sum_mean, target, means, variances, wvar, sum_mean - target,
                             target - wvar, exps)
    if coupling is not None:
        idx, wts = _coupling_on_grid(tup, coupling)
        xs = [tup.grid.axis[v] for v in idx]
        c = tup.cost.evaluate(*xs)
        cm = float(np.sum(wts * c))
        cv = float(np.sum(wts * (c - cm) ** 2))
        A = sum(1.0 / a for a in alpha)
        rep.coupling_cost_mean = cm
        rep.coupling_cost_variance = cv
        rep.variance_bound = A * wvar
        rep.third_order_gap = A * wvar - cv
        hats = [a * (tup.components[k].values[tuple(v.T)] - means[k])
                for k, (a, v) in enumerate(zip(alpha, idx))]
        rep.equality_residual = float(max(np.max(np.abs(hats[k] - hats[l]))
                                          for k in range(tup.N) for l in range(tup.N)))
    return rep


def _coupling_on_grid(tup: FunctionTuple, coupling):
    if isinstance(coupling, tuple):
        idx, wts = coupling
        return [np.asarray(v, dtype=np.int64).reshape(-1, tup.grid.dim) for v in idx], np.asarray(wts)
    # a transport Coupling whose supports are grid nodes
    grid = tup.grid
    h = grid.spacing
    centre = (grid.points_per_axis - 1) // 2
    nz = np.nonzero(coupling.weights > 0)
    wts = coupling.weights[nz]
    idx = []
    for k, sup in enumerate(coupling.supports):
        node = np.rint(np.asarray(sup, dtype=float) / h).astype(np.int64) + centre
        idx.append(node.reshape(-1, grid.dim)[nz[k]])
    return idx, wts / wts.sum()


# ---------------------------------------------------------------------------
# weighted product inequality on the positive orthant
# ---------------------------------------------------------------------------


@dataclass
class WeightProfile:
    """Nonincreasing profile ``u -> rho(u) >= 0`` (an indicator when ``cutoff`` is set)."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, u):
        return np.asarray(self.fn(np.asarray(u, dtype=float)), dtype=float)

    @classmethod
    def exponential(cls) -> "WeightProfile":
        return cls(lambda u: np.exp(-u), "exp(-u)")

    @classmethod
    def indicator(cls, level: float = 1.0) -> "WeightProfile":
        return cls(lambda u: (u <= level + 1e-12).astype(float), f"1[u<={level}]")

    def check_monotone(self, samples: int = 200) -> bool:
        u = np.linspace(0.0, 20.0, samples)
        v = self(u)
        return bool(np.all(v >= 0) and np.all(np.diff(v) <= 1e-12))


@dataclass
class WeightedProductReport:
    lhs: float
    rhs: float
    ok: bool
    constraint_slack: float
    constraint_witness: Optional[list]
    measure_hypothesis_ok: bool


def _orthant_rule(n: int, half_width: float, points: int):
    t = np.linspace(0.0, half_width, points)
    w1 = np.full(points, t[1] - t[0])
    w1[[0, -1]] *= 0.5
    if n == 1:
        return t[:, None], w1
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.stack([X, Y], axis=-1).reshape(-1, 2), np.outer(w1, w1).ravel()


def weighted_product_inequality_check(fs: Sequence[Callable], rho: WeightProfile, alpha: Sequence,
                                      m: ReferenceMeasure, samples: int = 4000, seed: int = 0,
                                      half_width: float = 8.0, points: Optional[int] = None,
                                      rtol: float = 1e-3) -> WeightedProductReport:
    """Weighted product inequality on the positive orthant.

    Checks ``prod_i (int f_i dm)^(1/alpha_i) <= (int rho^(1/A)(sum_j t_j^A) dm)^A``
    with ``A = sum 1/alpha_i`` after verifying by sampling that
    ``prod f_i(x_i)^(1/alpha_i) <= rho(c(x))`` for the weighted product cost
    and that ``s -> -log density(exp(s))`` is convex.
    """
    n = m.dim
    N = len(fs)
    alpha = [float(a) for a in alpha]
    if len(alpha) != N:
        raise ValueError("need one weight per function")
    A = sum(1.0 / a for a in alpha)
    rng = np.random.default_rng(seed)
    # measure hypothesis: W(s) = -log rho_m(e^s) convex
    s1 = rng.normal(scale=1.5, size=(samples, n))
    s2 = rng.normal(scale=1.5, size=(samples, n))

    def W(s):
        with np.errstate(divide="ignore"):
            return -np.log(m(np.exp(s)))

    wa, wb, wm = W(s1), W(s2), W(0.5 * (s1 + s2))
    fin = np.isfinite(wa) & np.isfinite(wb)
    hyp_ok = bool(np.all(wm[fin] <= 0.5 * (wa[fin] + wb[fin]) + 1e-9 * np.maximum(1, np.abs(wm[fin]))))
    # constraint on random orthant points (log-uniform radii reach small and large scales)
    xs = [np.exp(rng.uniform(-4.0, np.log(half_width), size=(samples, n))) for _ in range(N)]
    cost = CostSpec("weighted-product", N, n, {"alpha": list(alpha)})
    c = cost.evaluate(*xs)
    prod = np.ones(samples)
    for f, a, x in zip(fs, alpha, xs):
        prod = prod * np.asarray(f(x), dtype=float) ** (1.0 / a)
    slack = rho(c) - prod
    k = int(np.argmin(slack))
    cons = float(slack[k])
    witness = [x[k].tolist() for x in xs] if cons < -1e-12 else None
    pts, w = _orthant_rule(n, half_width, points or (4001 if n == 1 else 401))
    dens = m(pts)
    lhs_log = 0.0
    for f, a in zip(fs, alpha):
        val = float(np.sum(w * dens * np.asarray(f(pts), dtype=float)))
        lhs_log += (math.log(val) if val > 0 else -math.inf) / a
    rhs_int = float(np.sum(w * dens * rho(np.sum(pts ** A, axis=1)) ** (1.0 / A)))
    lhs = math.exp(lhs_log)
    rhs = rhs_int ** A
    ok = hyp_ok and witness is None and lhs <= rhs * (1 + rtol)
    return WeightedProductReport(lhs, rhs, ok, cons, witness, hyp_ok)


# ---------------------------------------------------------------------------
# layer cake
# ---------------------------------------------------------------------------


def layer_cake_check(body: StarBody, beta: float, m: Optional[ReferenceMeasure] = None,
                     points: int = 401, tail: float = 30.0) -> tuple:
    """Both sides of ``int exp(-gauge^beta) dm = m(K) Gamma(1 + (n + r)/beta)``.

    The left side is grid quadrature of the polygon gauge on a box wide
    enough that ``gauge^beta > tail`` at its edge; the right side uses
    :func:`measure_of_body`.  ``m`` must be homogeneous (Lebesgue by default).

    Returns
    -------
    (lhs, rhs)
    """
    n = body.dim
    m = m or ReferenceMeasure.lebesgue(n)
    if m.homogeneity is None:
        raise ValueError("the layer-cake identity needs a homogeneous measure")
    r = float(m.homogeneity)
    hw = float(np.max(body.radial)) * tail ** (1.0 / beta)
    grid = CartesianGrid(n, hw, points)
    interp = "polygon" if n == 2 else "nearest"
    V = GridFunction(grid, gauge_eval(body, grid.nodes(), interpolation=interp) ** beta)
    lhs = integrate_exp(V, 1.0, m)
    rhs = measure_of_body(body, m) * math.gamma(1.0 + (n + r) / beta)
    return float(lhs), float(rhs)
