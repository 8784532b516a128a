"""Multiple c-Legendre transforms, c-polar transforms and best-response cycles.

The c-Legendre transform of slot ``i`` is

    x_i -> max over grid nodes of the other slots of  c(x) - sum_{j != i} V_j(x_j)

computed by a full scan of the product grid.  For coordinate-separable costs
(``c = sum_j prod_i g_ij(x_ij)``) and coordinate-separable potentials the
scan splits into one 1-D problem per axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .costs import CostSpec, check_partial_convexity, check_sign_symmetry
from .geometry import (
    CartesianGrid,
    DirectionGrid,
    GridFunction,
    ReferenceMeasure,
    StarBody,
    gauge_eval,
    reflect_values,
)

__all__ = [
    "FunctionTuple",
    "BodyTuple",
    "TransformInfo",
    "SweepTrace",
    "DivergenceError",
    "c_legendre_component",
    "best_response_cycle",
    "c_polar_component",
    "set_admissibility_excess",
    "homogeneous_lift",
    "MAX_SCAN",
]

# largest number of (output node, other-tuple) pairs scanned by the generic path
MAX_SCAN = 5 * 10**8
_CHUNK = 2 * 10**6


class DivergenceError(RuntimeError):
    """A best-response sweep produced values outside the representable range."""

    def __init__(self, component: int, message: str):
        super().__init__(f"component {component}: {message}")
        self.component = component


@dataclass(eq=False)
class FunctionTuple:
    """Potentials ``(V_1, ..., V_N)`` on one Cartesian grid, with a cost and weights ``alpha``."""

    components: tuple
    cost: CostSpec
    alpha: tuple = None

    def __post_init__(self):
        self.components = tuple(self.components)
        if len(self.components) != self.cost.N:
            raise ValueError(f"tuple has {len(self.components)} components, cost expects {self.cost.N}")
        grid = self.components[0].grid
        for V in self.components:
            if not isinstance(V, GridFunction):
                raise TypeError("components must be GridFunction instances")
            if V.grid != grid:
                raise ValueError("all components must share one grid")
        if grid.dim != self.cost.n:
            raise ValueError("grid dimension differs from the cost dimension")
        if self.alpha is None:
            self.alpha = (1.0,) * self.cost.N
        self.alpha = tuple(self.alpha)
        if len(self.alpha) != self.cost.N or any(float(a) <= 0 for a in self.alpha):
            raise ValueError("need one positive weight per component")

    @property
    def grid(self) -> CartesianGrid:
        return self.components[0].grid

    @property
    def N(self) -> int:
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def replace(self, i: int, V: GridFunction) -> "FunctionTuple":
        comps = list(self.components)
        comps[i] = V
        return FunctionTuple(tuple(comps), self.cost, self.alpha)

    @property
    def separable(self) -> bool:
        return all(V.separable for V in self.components)


@dataclass(eq=False)
class BodyTuple:
    """Star bodies ``(K_1, ..., K_N)`` on one direction grid, with a cost."""

    bodies: tuple
    cost: CostSpec

    def __post_init__(self):
        self.bodies = tuple(self.bodies)
        if len(self.bodies) != self.cost.N:
            raise ValueError(f"tuple has {len(self.bodies)} bodies, cost expects {self.cost.N}")
        grid = self.bodies[0].grid
        if any(K.grid != grid for K in self.bodies):
            raise ValueError("all bodies must share one direction grid")
        if grid.dim != self.cost.n:
            raise ValueError("body dimension differs from the cost dimension")

    @property
    def grid(self) -> DirectionGrid:
        return self.bodies[0].grid

    @property
    def N(self) -> int:
        return len(self.bodies)

    def __getitem__(self, i):
        return self.bodies[i]

    def __iter__(self):
        return iter(self.bodies)

    def replace(self, i: int, K: StarBody) -> "BodyTuple":
        bodies = list(self.bodies)
        bodies[i] = K
        return BodyTuple(tuple(bodies), self.cost)


# ---------------------------------------------------------------------------
# cached structural checks
# ---------------------------------------------------------------------------


def _cost_flags(cost: CostSpec) -> dict:
    flags = cost.__dict__.setdefault("_flags", {})
    if not flags:
        flags["sign"] = all(check_sign_symmetry(cost, i).ok for i in range(cost.N))
        flags["convex"] = all(check_partial_convexity(cost, i).ok for i in range(cost.N))
    return flags


# ---------------------------------------------------------------------------
# c-Legendre transform
# ---------------------------------------------------------------------------


@dataclass
class TransformInfo:
    """Diagnostics of one c-Legendre transform."""

    index: int
    method: str
    boundary_activity: float
    asymmetry: float
    scanned: int


def _scan_scalar(u: np.ndarray, h: np.ndarray, pen: np.ndarray, on_edge: np.ndarray):
    """``max_s (u h(s) - pen(s))`` for each entry of ``u``; first argmax on ties."""
    out = np.empty(u.size)
    edge = np.zeros(u.size, dtype=bool)
    step = max(1, _CHUNK // max(h.size, 1))
    for a in range(0, u.size, step):
        block = u[a:a + step, None] * h[None, :] - pen[None, :]
        k = np.argmax(block, axis=1)
        out[a:a + step] = block[np.arange(block.shape[0]), k]
        edge[a:a + step] = on_edge[k]
    return out, edge


def _other_product_1d(cost: CostSpec, i: int, axis: int, factors: Sequence[np.ndarray],
                      grid: CartesianGrid):
    """Flattened ``prod_{k != i} g_k`` and ``sum_{k != i} f_k`` over the finite product of 1-D grids."""
    t = grid.axis
    G = t.size
    h = np.ones(1)
    pen = np.zeros(1)
    edge = np.zeros(1, dtype=bool)
    is_edge = np.zeros(G, dtype=bool)
    is_edge[[0, -1]] = True
    for k in range(cost.N):
        if k == i:
            continue
        f = factors[k]
        fin = np.isfinite(f)
        if not fin.any():
            raise ValueError(f"component {k} is +inf everywhere; the transform has an empty domain")
        g = cost.coordinate_factor(k, axis, t[fin])
        h = (h[:, None] * g[None, :]).ravel()
        pen = (pen[:, None] + f[fin][None, :]).ravel()
        edge = (edge[:, None] | is_edge[fin][None, :]).ravel()
    return h, pen, edge


def _legendre_separable(tup: FunctionTuple, i: int):
    grid = tup.grid
    cost = tup.cost
    n = grid.dim
    comps = tup.components
    facs, edges = [], []
    for axis in range(n):
        axis_factors = [V.factors[axis] if V.factors is not None else V.values for V in comps]
        h, pen, edge = _other_product_1d(cost, i, axis, axis_factors, grid)
        u = cost.coordinate_factor(i, axis, grid.axis)
        f, e = _scan_scalar(u, h, pen, edge)
        facs.append(f)
        edges.append(e)
    if n == 1:
        values = facs[0]
        edge_any = edges[0]
    else:
        values = facs[0][:, None] + facs[1][None, :]
        edge_any = edges[0][:, None] | edges[1][None, :]
    return values, facs, float(np.mean(edge_any)), int(sum(
        grid.points_per_axis * np.prod([np.isfinite(
            (c.factors[a] if c.factors is not None else c.values)).sum()
            for k, c in enumerate(comps) if k != i]) for a in range(n)))


def _legendre_generic(tup: FunctionTuple, i: int):
    grid = tup.grid
    cost = tup.cost
    nodes = grid.nodes().reshape(-1, grid.dim)
    on_edge = np.any(np.abs(nodes) >= grid.half_width * (1 - 1e-12), axis=1)
    pts, pens, edges = [], [], []
    for k, V in enumerate(tup.components):
        if k == i:
            continue
        vals = V.values.ravel()
        fin = np.isfinite(vals)
        if not fin.any():
            raise ValueError(f"component {k} is +inf everywhere; the transform has an empty domain")
        pts.append(nodes[fin])
        pens.append(vals[fin])
        edges.append(on_edge[fin])
    sizes = [p.shape[0] for p in pts]
    total = int(np.prod(sizes))
    scanned = total * nodes.shape[0]
    if scanned > MAX_SCAN:
        raise ValueError(f"transform would scan {scanned:.3g} pairs (> {MAX_SCAN:.3g}); "
                         "use separable potentials or a coarser grid")
    # flattened other-tuple index in lexicographic order
    mesh = np.indices(sizes).reshape(len(sizes), -1)
    pen = np.zeros(total)
    edge = np.zeros(total, dtype=bool)
    for s, (p, e) in enumerate(zip(pens, edges)):
        pen += p[mesh[s]]
        edge |= e[mesh[s]]
    out = np.empty(nodes.shape[0])
    out_edge = np.zeros(nodes.shape[0], dtype=bool)
    if cost.family in ("inner-product", "product") and cost.N == 2:
        Y = pts[0]
        step = max(1, _CHUNK // total)
        for a in range(0, nodes.shape[0], step):
            block = nodes[a:a + step] @ Y.T - pen[None, :]
            k = np.argmax(block, axis=1)
            out[a:a + step] = block[np.arange(block.shape[0]), k]
            out_edge[a:a + step] = edge[k]
    else:
        others = [p[mesh[s]] for s, p in enumerate(pts)]
        step = max(1, _CHUNK // total)
        for a in range(0, nodes.shape[0], step):
            x = nodes[a:a + step]
            args = []
            o = 0
            for k in range(cost.N):
                if k == i:
                    args.append(x[:, None, :])
                else:
                    args.append(others[o][None, :, :])
                    o += 1
            block = cost.evaluate(*args) - pen[None, :]
            kk = np.argmax(block, axis=1)
            out[a:a + step] = block[np.arange(block.shape[0]), kk]
            out_edge[a:a + step] = edge[kk]
    return out.reshape(grid.shape), float(np.mean(out_edge)), scanned


def c_legendre_component(tup: FunctionTuple, i: int, full_output: bool = False):
    """Multiple c-Legendre transform of the slots other than ``i``.

    Returns a :class:`GridFunction` (and a :class:`TransformInfo` when
    ``full_output``).  The result is averaged with its reflection; when the
    cost has the sign symmetry this is a no-op, which is asserted.  Values are
    sups over the box, so a transform that is infinite in the continuum shows
    up as a large finite value with ``boundary_activity`` near 1.
    """
    if not 0 <= i < tup.N:
        raise ValueError(f"slot {i} out of range")
    cost = tup.cost
    use_sep = cost.coordinate_separable and all(
        V.separable or tup.grid.dim == 1 for k, V in enumerate(tup.components) if k != i)
    if use_sep:
        values, facs, activity, scanned = _legendre_separable(tup, i)
        method = "separable"
    else:
        values, activity, scanned = _legendre_generic(tup, i)
        facs = None
        method = "scan"
    rv = reflect_values(values)
    scale = max(1.0, float(np.max(np.abs(values))))
    asym = float(np.max(np.abs(values - rv))) / scale
    if _cost_flags(cost)["sign"] and asym > 1e-9:
        raise AssertionError(f"transform of slot {i} is not even (asymmetry {asym:.3g}) "
                             "although the cost is sign-symmetric")
    values = 0.5 * (values + rv)
    if facs is not None and tup.grid.dim > 1:
        facs = [0.5 * (f + f[::-1]) for f in facs]
        V = GridFunction(tup.grid, values, tuple(facs))
    else:
        V = GridFunction(tup.grid, values)
    if full_output:
        return V, TransformInfo(i, method, activity, asym, scanned)
    return V


# ---------------------------------------------------------------------------
# best-response cycle
# ---------------------------------------------------------------------------


@dataclass
class SweepTrace:
    values: list = field(default_factory=list)        # BS value after each sweep
    changes: list = field(default_factory=list)       # sup-norm change per sweep
    boundary_activity: list = field(default_factory=list)
    converged: bool = False
    sweeps: int = 0


def _sup_change(a: np.ndarray, b: np.ndarray) -> float:
    both_inf = np.isinf(a) & np.isinf(b)
    with np.errstate(invalid="ignore"):
        d = np.where(both_inf, 0.0, np.abs(a - b))
    return float(np.max(d))


def best_response_cycle(tup: FunctionTuple, max_sweeps: int = 50, tol: float = 1e-9,
                        measures: Optional[Sequence[ReferenceMeasure]] = None,
                        divergence_bound: float = 1e12):
    """Cyclically replace each slot by the c-Legendre transform of the others.

    Stops once a sweep changes every component by less than ``tol`` in the
    sup norm, or after ``max_sweeps``.  From the first completed sweep on the
    tuple is admissible at the grid nodes and the BS value is nondecreasing,
    which is asserted to 1e-10 relative.

    Returns
    -------
    (FunctionTuple, SweepTrace)
    """
    from .functional import bs_value

    trace = SweepTrace()
    cur = tup
    for sweep in range(max_sweeps):
        change = 0.0
        activity = 0.0
        for i in range(cur.N):
            new, info = c_legendre_component(cur, i, full_output=True)
            fin = new.values[np.isfinite(new.values)]
            if fin.size == 0 or not np.all(np.isfinite(fin)) or np.max(np.abs(fin)) > divergence_bound:
                raise DivergenceError(i, f"values left the range +-{divergence_bound:g} in sweep {sweep + 1}")
            change = max(change, _sup_change(cur[i].values, new.values))
            activity = max(activity, info.boundary_activity)
            cur = cur.replace(i, new)
        value = bs_value(cur, measures)
        if trace.values and value < trace.values[-1] * (1 - 1e-10):
            raise AssertionError(f"BS value decreased in sweep {sweep + 1}: "
                                 f"{trace.values[-1]!r} -> {value!r}")
        trace.values.append(value)
        trace.changes.append(change)
        trace.boundary_activity.append(activity)
        trace.sweeps = sweep + 1
        if change < tol:
            trace.converged = True
            break
    return cur, trace


# ---------------------------------------------------------------------------
# sets: c-polar transform and homogeneous lift
# ---------------------------------------------------------------------------


def _extreme_points(w: np.ndarray) -> np.ndarray:
    """Points of ``w`` that can maximize a linear function (hull vertices)."""
    if w.shape[1] == 1:
        return np.array([[w.min()], [w.max()]])
    try:
        return w[ConvexHull(w).vertices]
    except QhullError:
        return w


def _tuple_sup(cost: CostSpec, first: np.ndarray, slot: int, others: list) -> np.ndarray:
    """``max over other boundary tuples of c`` for each row of ``first`` placed in ``slot``."""
    sizes = [o.shape[0] for o in others]
    out = np.full(first.shape[0], -np.inf)
    if cost.family in ("product", "inner-product") and len(others) <= 2:
        # the cost is linear in ``first`` through w = coordinatewise product of
        # the others, so the sup only needs the extreme points of the w cloud
        # multilinear: each other body only contributes its hull vertices
        others = [_extreme_points(o) for o in others]
        w = others[0]
        if len(others) == 2:
            w = (others[0][:, None, :] * others[1][None, :, :]).reshape(-1, first.shape[1])
        return np.max(first @ _extreme_points(w).T, axis=1)
    mesh = np.indices(sizes).reshape(len(sizes), -1)
    flat = [o[mesh[s]] for s, o in enumerate(others)]
    total = mesh.shape[1]
    step = max(1, _CHUNK // total)
    for a in range(0, first.shape[0], step):
        args = []
        o = 0
        for k in range(cost.N):
            if k == slot:
                args.append(first[a:a + step, None, :])
            else:
                args.append(flat[o][None, :, :])
                o += 1
        out[a:a + step] = np.max(cost.evaluate(*args), axis=1)
    return out


def c_polar_component(bodies: BodyTuple, i: int, degree=None) -> StarBody:
    """Largest body in slot ``i`` keeping ``c <= 1`` on the product with the other slots.

    For a cost of degree ``p_i > 0`` in slot ``i`` the radial function is
    ``sup(c at unit direction theta)^(-1/p_i)``, the sup running over the
    boundary samples of the other bodies.  Between samples the bodies are
    polygons, and costs convex in each slot peak at vertices, so the sup is
    exact for the sampled polygons.
    """
    cost = bodies.cost
    if degree is None:
        degs = cost.declared_degrees()
        if degs is None:
            raise ValueError(f"{cost.family} cost has no per-marginal degrees; pass degree=")
        degree = degs[i]
    degree = float(degree)
    if degree <= 0:
        raise ValueError("slot degree must be positive")
    grid = bodies.grid
    others = [K.boundary_points for k, K in enumerate(bodies.bodies) if k != i]
    s = _tuple_sup(cost, grid.directions, i, others)
    s = np.maximum(s, 0.0)
    if np.all(s <= 0.0):
        raise ValueError("cost is never positive on the other bodies; the polar is unbounded")
    if np.any(s <= 0.0):
        raise ValueError("polar is unbounded in some directions (sup of the cost is 0 there)")
    radial = s ** (-1.0 / degree)
    flags = _cost_flags(cost)
    want_convex = all(K.convex for k, K in enumerate(bodies.bodies) if k != i) and flags["sign"]
    out = StarBody(grid, radial, convex=False)
    if want_convex:
        if not out.is_convex(tol=1e-7):
            raise AssertionError(f"c-polar of slot {i} is not convex although the hypotheses hold")
        out = StarBody(grid, out.radial, convex=out.is_convex())
    return out


def set_admissibility_excess(bodies: BodyTuple) -> float:
    """``max c - 1`` over tuples of boundary samples (<= 0 means admissible)."""
    pts = [K.boundary_points for K in bodies.bodies]
    return float(np.max(_tuple_sup(bodies.cost, pts[0], 0, pts[1:]))) - 1.0


def homogeneous_lift(bodies: BodyTuple, exp, grid: Optional[CartesianGrid] = None,
                     alpha: Optional[Sequence] = None) -> FunctionTuple:
    """Potentials ``tau_i * gauge_{K_i}(x)^{beta_i}`` on a Cartesian grid.

    The gauge is the polygon gauge (the bodies are the polygons through their
    boundary samples), which keeps the lifted tuple exactly admissible
    whenever the body tuple is.
    """
    if exp.N != bodies.N:
        raise ValueError("exponent system and body tuple have different N")
    exp.assert_consistent()
    grid = grid or CartesianGrid.default(bodies.cost.n)
    nodes = grid.nodes()
    comps = []
    for K, tau, beta in zip(bodies.bodies, exp.tau, exp.beta):
        g = gauge_eval(K, nodes, interpolation="polygon")
        comps.append(GridFunction(grid, float(tau) * g ** float(beta)))
    a = alpha if alpha is not None else tuple(float(x) for x in exp.alpha)
    return FunctionTuple(tuple(comps), bodies.cost, a)
