"""Grids, symmetric star bodies, reference measures and quadrature.

Everything else in the package computes on the objects defined here:

* :class:`DirectionGrid` -- a negation-closed set of unit directions with
  quadrature weights (two points on the 0-sphere, equally spaced angles on
  the circle).
* :class:`StarBody` -- a symmetric star body stored by its radial function on
  a direction grid.  Between grid directions the boundary is the polygon
  through the sampled boundary points.
* :class:`CartesianGrid` / :class:`GridFunction` -- even potentials on a
  symmetric box, with an explicit ``+inf`` marking outside the support.
* :class:`ReferenceMeasure` -- a density with declared structural flags.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DirectionGrid",
    "StarBody",
    "CartesianGrid",
    "GridFunction",
    "ReferenceMeasure",
    "TruncationWarning",
    "gauge_eval",
    "steiner_symmetrize",
    "section_bounds",
    "measure_of_body",
    "integrate_exp",
    "node_weights",
    "expectation",
    "reflect_values",
    "DEFAULT_DIRECTIONS",
    "RADIAL_STEPS",
]

DEFAULT_DIRECTIONS = 256
RADIAL_STEPS = 512
GAUSS_RADIAL = 24
_DEFAULT_GRIDS = {1: (8.0, 321), 2: (6.0, 121)}


class TruncationWarning(UserWarning):
    """Mass near the edge of a Cartesian grid is not negligible."""


# ---------------------------------------------------------------------------
# direction grids and star bodies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Unit directions closed under negation, with quadrature weights.

    For ``dim == 1`` the directions are ``+1`` (index 0) and ``-1`` (index
    1).  For ``dim == 2`` direction ``k`` has angle ``2*pi*k/count``; the
    antipode of ``k`` is ``(k + count//2) % count``.
    """

    dim: int
    count: int

    def __post_init__(self):
        if self.dim == 1:
            if self.count != 2:
                raise ValueError("the 0-sphere has exactly two directions")
        elif self.dim == 2:
            if self.count < 8 or self.count % 4:
                raise ValueError("circle grids need a multiple of 4 directions (>= 8)")
        else:
            raise ValueError(f"unsupported dimension {self.dim}; use 1 or 2")
        object.__setattr__(self, "_cache", {})

    @classmethod
    def default(cls, dim: int) -> "DirectionGrid":
        return cls(dim, 2 if dim == 1 else DEFAULT_DIRECTIONS)

    @property
    def angles(self) -> np.ndarray:
        if self.dim == 1:
            return np.array([0.0, math.pi])
        return 2.0 * math.pi * np.arange(self.count) / self.count

    @property
    def directions(self) -> np.ndarray:
        """Array of shape ``(count, dim)``."""
        cache = self._cache
        if "directions" not in cache:
            if self.dim == 1:
                d = np.array([[1.0], [-1.0]])
            else:
                a = self.angles
                d = np.column_stack([np.cos(a), np.sin(a)])
                # exact zeros/ones on the axes and exact antipodal negation
                d[np.abs(d) < 1e-15] = 0.0
                half = self.count // 2
                d[half:] = -d[:half]
            d.setflags(write=False)
            cache["directions"] = d
        return cache["directions"]

    @property
    def weights(self) -> np.ndarray:
        if self.dim == 1:
            return np.ones(2)
        return np.full(self.count, 2.0 * math.pi / self.count)

    @property
    def step(self) -> float:
        return math.pi if self.dim == 1 else 2.0 * math.pi / self.count

    def antipode(self, k):
        return (np.asarray(k) + self.count // 2) % self.count

    def reflection_index(self, axis: int) -> np.ndarray:
        """Permutation of directions induced by flipping coordinate ``axis``."""
        k = np.arange(self.count)
        if self.dim == 1:
            return (k + 1) % 2
        if axis == 0:  # theta -> pi - theta
            return (self.count // 2 - k) % self.count
        if axis == 1:  # theta -> -theta
            return (-k) % self.count
        raise ValueError(f"axis {axis} out of range for dimension 2")

    def nearest(self, points) -> np.ndarray:
        """Index of the grid direction nearest to each (nonzero) point."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[-1]}, expected {self.dim}")
        if self.dim == 1:
            return np.where(pts[..., 0] >= 0.0, 0, 1)
        ang = np.arctan2(pts[..., 1], pts[..., 0])
        return np.rint(ang / self.step).astype(np.int64) % self.count

    def __eq__(self, other):
        return isinstance(other, DirectionGrid) and (self.dim, self.count) == (other.dim, other.count)

    def __hash__(self):
        return hash((self.dim, self.count))


@dataclass(eq=False)
class StarBody:
    """Symmetric star body given by its radial function on a direction grid.

    ``radial[k]`` is the distance from the origin to the boundary along
    direction ``k``.  Symmetry ``r(theta) == r(-theta)`` is enforced exactly
    by averaging with the antipodal samples; an input that is not symmetric
    to ``1e-9`` relative is rejected.
    """

    grid: DirectionGrid
    radial: np.ndarray
    convex: bool = False

    def __post_init__(self):
        r = np.array(self.radial, dtype=float).reshape(-1)
        if r.shape != (self.grid.count,):
            raise ValueError(f"radial has {r.size} samples, grid has {self.grid.count}")
        if not np.all(np.isfinite(r)) or np.any(r <= 0.0):
            raise ValueError("radial function must be positive and finite")
        rr = r[self.grid.antipode(np.arange(self.grid.count))]
        if np.max(np.abs(r - rr) / np.maximum(r, rr)) > 1e-9:
            raise ValueError("star body is not symmetric (r(theta) != r(-theta))")
        r = 0.5 * (r + rr)
        r.setflags(write=False)
        self.radial = r
        if self.convex and not self.is_convex():
            raise ValueError("body flagged convex but its boundary polygon is not convex")

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def boundary_points(self) -> np.ndarray:
        return self.radial[:, None] * self.grid.directions

    def replace(self, radial, convex: Optional[bool] = None) -> "StarBody":
        return StarBody(self.grid, radial, self.convex if convex is None else convex)

    def scaled(self, t: float) -> "StarBody":
        return self.replace(self.radial * t)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "kind": "star_body", "grid": {"count": self.grid.count},
                "radial": [float(r) for r in self.radial], "convex": bool(self.convex)}

    @classmethod
    def from_dict(cls, d: dict) -> "StarBody":
        if d.get("kind") != "star_body":
            raise ValueError(f"expected kind 'star_body', got {d.get('kind')!r}")
        grid = DirectionGrid(int(d["dim"]), int(d["grid"]["count"]))
        return cls(grid, np.array(d["radial"], dtype=float), bool(d.get("convex", False)))

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_radial_function(cls, fn: Callable, grid: Optional[DirectionGrid] = None, dim: int = 2,
                             convex: bool = False) -> "StarBody":
        grid = grid or DirectionGrid.default(dim)
        return cls(grid, fn(grid.directions), convex)

    @classmethod
    def lp_ball(cls, p: float, dim: int = 2, grid: Optional[DirectionGrid] = None,
                radius: float = 1.0) -> "StarBody":
        """The ball ``{sum |x_j|^p <= radius^p}`` (``p = inf`` gives the cube)."""
        grid = grid or DirectionGrid.default(dim)
        d = np.abs(grid.directions)
        if math.isinf(p):
            norm = d.max(axis=1)
        else:
            norm = np.sum(d ** p, axis=1) ** (1.0 / p)
        return cls(grid, radius / norm, convex=p >= 1)

    @classmethod
    def interval(cls, half_width: float) -> "StarBody":
        return cls(DirectionGrid.default(1), [half_width, half_width], convex=True)

    @classmethod
    def from_quadratic_form(cls, matrix, grid: Optional[DirectionGrid] = None) -> "StarBody":
        """Ellipse ``{x : x^T Q x <= 1}`` for a positive definite ``Q``."""
        grid = grid or DirectionGrid.default(2)
        q = np.asarray(matrix, dtype=float)
        d = grid.directions
        return cls(grid, 1.0 / np.sqrt(np.einsum("ki,ij,kj->k", d, q, d)), convex=True)

    @classmethod
    def from_polygon(cls, vertices, grid: Optional[DirectionGrid] = None,
                     convex: bool = True) -> "StarBody":
        """Sample a convex polygon containing the origin (vertices in any order)."""
        grid = grid or DirectionGrid.default(2)
        v = np.asarray(vertices, dtype=float)
        centre = v.mean(axis=0)
        order = np.argsort(np.arctan2(v[:, 1] - centre[1], v[:, 0] - centre[0]))
        return cls(grid, _ray_polygon(v[order], grid.directions), convex)

    # -- geometry -----------------------------------------------------------

    def _edges(self):
        cache = self.__dict__.setdefault("_edge_cache", {})
        if "edges" not in cache:
            b = self.boundary_points
            nxt = np.roll(b, -1, axis=0)
            e = nxt - b
            normal = np.column_stack([e[:, 1], -e[:, 0]])
            offset = np.einsum("ij,ij->i", normal, b)
            cache["edges"] = (normal, offset)
        return cache["edges"]

    def is_convex(self, tol: float = 1e-9) -> bool:
        if self.dim == 1:
            return True
        b = self.boundary_points
        e = np.roll(b, -1, axis=0) - b
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        scale = np.max(self.radial) ** 2
        return bool(np.all(cross >= -tol * scale))

    def is_unconditional(self, tol: float = 1e-6) -> bool:
        return self.asymmetry() <= tol

    def asymmetry(self) -> float:
        """Largest relative radial change under a coordinate sign flip."""
        worst = 0.0
        for axis in range(self.dim):
            rr = self.radial[self.grid.reflection_index(axis)]
            worst = max(worst, float(np.max(np.abs(self.radial - rr) / self.radial)))
        return worst

    def reflect(self, axis: int) -> "StarBody":
        return self.replace(self.radial[self.grid.reflection_index(axis)])


def _ray_polygon(vertices: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Distance from the origin to the boundary of a convex polygon along rays."""
    nxt = np.roll(vertices, -1, axis=0)
    e = nxt - vertices
    normal = np.column_stack([e[:, 1], -e[:, 0]])
    offset = np.einsum("ij,ij->i", normal, vertices)
    keep = np.hypot(e[:, 0], e[:, 1]) > 1e-14
    normal, offset = normal[keep], offset[keep]
    if np.any(offset <= 0):
        raise ValueError("origin is not interior to the polygon (or vertices are not counter-clockwise)")
    proj = directions @ normal.T
    with np.errstate(divide="ignore"):
        ratio = np.where(proj > 1e-15, offset[None, :] / proj, np.inf)
    return ratio.min(axis=1)


def gauge_eval(body: StarBody, point, interpolation: str = "nearest"):
    """Minkowski functional of ``body`` at ``point`` (vectorised over leading axes).

    ``interpolation="nearest"`` divides ``|x|`` by the radius of the nearest
    grid direction.  ``"polygon"`` uses the boundary polygon through the
    sampled points, which is the convex hull of the samples for convex
    bodies; both rules are exactly 1-homogeneous.
    """
    x = np.asarray(point, dtype=float)
    if x.shape[-1] != body.dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match body dimension {body.dim}")
    norm = np.linalg.norm(x, axis=-1)
    if body.dim == 1 or interpolation == "nearest":
        k = body.grid.nearest(x)
        out = norm / body.radial[k]
    elif interpolation == "polygon":
        normal, offset = body._edges()
        ang = np.arctan2(x[..., 1], x[..., 0]) % (2.0 * math.pi)
        k = np.floor(ang / body.grid.step).astype(np.int64) % body.grid.count
        out = np.einsum("...i,...i->...", x, normal[k]) / offset[k]
        out = np.maximum(out, 0.0)
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    out = np.where(norm == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def section_bounds(points: np.ndarray, axis: int, heights: np.ndarray) -> tuple:
    """Ends ``(lo, hi)`` of the chords parallel to ``axis`` of a closed polygon.

    ``heights`` are values of the other coordinate; empty sections give
    ``lo = +inf`` and ``hi = -inf``.
    """
    heights = np.asarray(heights, dtype=float)
    other = 1 - axis
    a = points
    b = np.roll(points, -1, axis=0)
    ha, hb = a[:, other], b[:, other]
    lo, hi = np.minimum(ha, hb), np.maximum(ha, hb)
    dh = hb - ha
    h = heights[:, None]
    inside = (h >= lo[None, :]) & (h <= hi[None, :]) & (np.abs(dh)[None, :] > 1e-15)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(inside, (h - ha[None, :]) / dh[None, :], 0.0)
    coord = a[None, :, axis] + s * (b[None, :, axis] - a[None, :, axis])
    cmax = np.where(inside, coord, -np.inf).max(axis=1)
    cmin = np.where(inside, coord, np.inf).min(axis=1)
    # horizontal edges lying exactly on a height
    flat = (np.abs(dh) <= 1e-15)[None, :] & (np.abs(h - ha[None, :]) <= 1e-15)
    if flat.any():
        ends = np.concatenate([a[:, axis], b[:, axis]])
        flat2 = np.concatenate([flat, flat], axis=1)
        cmax = np.maximum(cmax, np.where(flat2, ends[None, :], -np.inf).max(axis=1))
        cmin = np.minimum(cmin, np.where(flat2, ends[None, :], np.inf).min(axis=1))
    return cmin, cmax


def _section_widths(points: np.ndarray, axis: int, heights: np.ndarray) -> np.ndarray:
    """Length of the chord parallel to ``axis`` at each height of the other coordinate."""
    cmin, cmax = section_bounds(points, axis, heights)
    return np.where(np.isfinite(cmax) & np.isfinite(cmin), np.maximum(cmax - cmin, 0.0), 0.0)


def steiner_symmetrize(body: StarBody, axis: int) -> StarBody:
    """Steiner symmetral of a convex body: chords parallel to ``e_axis`` are centred.

    The boundary polygon is convex, so chord length is piecewise linear in
    the height with breakpoints at vertex heights; the symmetral is the
    polygon through the centred chord ends at those heights, re-sampled on
    the direction grid and dilated back to the exact area.
    """
    if not body.convex:
        raise ValueError("Steiner symmetrization needs a convex-flagged body")
    if body.dim == 1:
        return body
    if axis not in (0, 1):
        raise ValueError(f"axis {axis} out of range for dimension 2")
    other = 1 - axis
    pts = body.boundary_points
    heights = np.unique(pts[:, other])
    widths = _section_widths(pts, axis, heights)
    half = 0.5 * widths
    # right boundary bottom-to-top, then left boundary top-to-bottom
    right = np.empty((heights.size, 2))
    right[:, axis], right[:, other] = half, heights
    left = right[::-1].copy()
    left[:, axis] *= -1.0
    poly = np.concatenate([right, left])
    # drop zero-width endpoints duplicated between the two chains
    keep = np.ones(len(poly), dtype=bool)
    dup = np.all(np.isclose(poly, np.roll(poly, 1, axis=0), atol=1e-15, rtol=0.0), axis=1)
    keep &= ~dup
    poly = poly[keep]
    if axis == 1:  # keep counter-clockwise orientation
        poly = poly[::-1]
    r = _ray_polygon(poly, body.grid.directions)
    # exact mirror symmetry across the hyperplane orthogonal to the axis
    r = 0.5 * (r + r[body.grid.reflection_index(axis)])
    # re-sampling inscribes a polygon and cuts vertices off; a uniform
    # dilation restores the area of the exact symmetral
    sampled = _shoelace(r[:, None] * body.grid.directions)
    r = r * math.sqrt(_shoelace(poly) / sampled)
    return StarBody(body.grid, r, convex=True)


def _shoelace(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


# ---------------------------------------------------------------------------
# reference measures
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ReferenceMeasure:
    """A measure ``rho(x) dx`` on R^n with declared structural flags.

    ``homogeneity`` is the degree ``r`` with ``rho(t x) = t^r rho(x)`` when it
    exists.  Declared flags can be re-checked with :meth:`verify`.
    """

    kind: str
    dim: int
    density: Callable[[np.ndarray], np.ndarray]
    homogeneity: Optional[float] = None
    log_concave: bool = False
    unconditional: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, points) -> np.ndarray:
        return self.density(np.asarray(points, dtype=float))

    @classmethod
    def lebesgue(cls, dim: int) -> "ReferenceMeasure":
        return cls("lebesgue", dim, lambda x: np.ones(x.shape[:-1]), 0.0, True, True)

    @classmethod
    def gaussian(cls, dim: int) -> "ReferenceMeasure":
        c = (2.0 * math.pi) ** (-dim / 2.0)
        return cls("gaussian", dim, lambda x: c * np.exp(-0.5 * np.sum(x * x, axis=-1)),
                   None, True, True)

    @classmethod
    def exponential_product(cls, dim: int) -> "ReferenceMeasure":
        return cls("exponential-product", dim, lambda x: np.exp(-np.sum(np.abs(x), axis=-1)),
                   None, True, True)

    @classmethod
    def power(cls, dim: int, r: float) -> "ReferenceMeasure":
        """``rho(x) = |x|^r``, an r-homogeneous unconditional density."""
        return cls("custom-density", dim, lambda x: np.linalg.norm(x, axis=-1) ** r, float(r),
                   r == 0, True, {"power": r})

    @classmethod
    def custom(cls, dim: int, density: Callable, homogeneity: Optional[float] = None,
               log_concave: bool = False, unconditional: bool = False) -> "ReferenceMeasure":
        return cls("custom-density", dim, density, homogeneity, log_concave, unconditional)

    def verify(self, samples: int = 64, seed: int = 0) -> dict:
        """Sampled re-check of nonnegativity, homogeneity and unconditionality."""
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(samples, self.dim))
        rho = self(x)
        out = {"nonnegative": bool(np.all(rho >= 0.0))}
        if self.homogeneity is not None:
            worst = 0.0
            for t in (0.5, 2.0):
                lhs = self(t * x)
                rhs = t ** self.homogeneity * rho
                worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300))))
            out["homogeneity_residual"] = worst
            out["homogeneous"] = worst <= 1e-9
        if self.unconditional:
            worst = 0.0
            for axis in range(self.dim):
                y = x.copy()
                y[:, axis] *= -1.0
                worst = max(worst, float(np.max(np.abs(self(y) - rho))))
            out["unconditional"] = worst <= 1e-12 * max(1.0, float(np.max(np.abs(rho))))
        if self.log_concave:
            # midpoint log-concavity on random pairs
            y = rng.normal(size=(samples, self.dim))
            with np.errstate(divide="ignore"):
                la, lb, lm = np.log(self(x)), np.log(self(y)), np.log(self(0.5 * (x + y)))
            ok = np.isneginf(la) | np.isneginf(lb) | (lm >= 0.5 * (la + lb) - 1e-9)
            out["log_concave"] = bool(np.all(ok))
        out["ok"] = all(v for k, v in out.items() if isinstance(v, bool))
        return out


def _gauss01(k: int):
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


def measure_of_body(body: StarBody, m: ReferenceMeasure, steps: int = RADIAL_STEPS,
                    rule: str = "polygon") -> float:
    """``m(K)`` by quadrature.

    ``rule="polygon"`` integrates over the polygon through the boundary
    samples (the shape used by the polygon gauge and by Steiner
    symmetrization): a fan of triangles with a Gauss-Legendre product rule
    on each; Lebesgue measure is exact.
    ``rule="sector"`` treats the radial function as constant on the sector
    of each direction (midpoint rule along each ray).
    """
    if m.dim != body.dim:
        raise ValueError("measure and body dimensions differ")
    n = body.dim
    frac = (np.arange(steps) + 0.5) / steps
    if rule == "sector" or n == 1:
        t = body.radial[:, None] * frac[None, :]  # (K, steps)
        pts = t[:, :, None] * body.grid.directions[:, None, :]
        ray = np.sum(m(pts) * t ** (n - 1), axis=1) * body.radial / steps
        return float(math.fsum(ray * body.grid.weights))
    if rule != "polygon":
        raise ValueError(f"unknown rule {rule!r}")
    p = body.boundary_points
    q = np.roll(p, -1, axis=0)
    det = np.abs(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0])
    if m.kind == "lebesgue":
        return float(0.5 * math.fsum(det))
    u, wu = _gauss01(8)
    s, ws = _gauss01(GAUSS_RADIAL)
    edge = p[:, None, :] + u[None, :, None] * (q - p)[:, None, :]          # (K, U, 2)
    pts = s[None, None, :, None] * edge[:, :, None, :]                    # (K, U, S, 2)
    inner = m(pts) @ (ws * s)                                             # (K, U)
    return float(math.fsum(det * (inner @ wu)))


# ---------------------------------------------------------------------------
# Cartesian grids and grid functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CartesianGrid:
    """Uniform symmetric grid on ``[-L, L]^n`` with an odd number of points per axis."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dim}; use 1 or 2")
        if self.points_per_axis < 3 or self.points_per_axis % 2 == 0:
            raise ValueError("points_per_axis must be odd and >= 3 (0 must be a node)")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @classmethod
    def default(cls, dim: int) -> "CartesianGrid":
        L, G = _DEFAULT_GRIDS[dim]
        return cls(dim, L, G)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def axis(self) -> np.ndarray:
        G = self.points_per_axis
        a = self.spacing * (np.arange(G) - (G - 1) // 2)
        return a

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def center_index(self) -> tuple:
        return ((self.points_per_axis - 1) // 2,) * self.dim

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)


def reflect_values(values: np.ndarray) -> np.ndarray:
    """Values at ``-x`` on a symmetric grid."""
    return values[(slice(None, None, -1),) * values.ndim]


def _even_average(values: np.ndarray) -> tuple:
    v = np.asarray(values, dtype=float)
    rv = reflect_values(v)
    inf = np.isinf(v) | np.isinf(rv)
    with np.errstate(invalid="ignore"):
        diff = np.where(inf, 0.0, np.abs(v - rv))
        avg = np.where(inf, np.inf, 0.5 * (v + rv))
    mismatch = bool(np.any(np.isinf(v) != np.isinf(rv)))
    scale = max(1.0, float(np.max(np.abs(np.where(inf, 0.0, v)), initial=0.0)))
    return avg, float(diff.max(initial=0.0)) / scale, mismatch


@dataclass(eq=False)
class GridFunction:
    """Even extended-real function on a :class:`CartesianGrid`.

    ``values`` has shape ``grid.shape``; ``+inf`` marks nodes outside the
    support.  Optional ``factors`` (one 1-D array per axis) record a
    coordinate-separable representation ``V(x) = sum_j f_j(x_j)``.
    """

    grid: CartesianGrid
    values: np.ndarray
    factors: Optional[tuple] = None
    convex: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values have shape {v.shape}, grid has {self.grid.shape}")
        if np.any(np.isnan(v)) or np.any(np.isneginf(v)):
            raise ValueError("values must be finite or +inf")
        avg, asym, mismatch = _even_average(v)
        if mismatch or asym > 1e-9:
            raise ValueError(f"grid function is not even (asymmetry {asym:.3g})")
        avg.setflags(write=False)
        self.values = avg
        if self.factors is not None:
            facs = []
            for f in self.factors:
                f = np.asarray(f, dtype=float)
                if f.shape != (self.grid.points_per_axis,):
                    raise ValueError("each factor must have one value per axis node")
                fa, fasym, fmis = _even_average(f)
                if fmis or fasym > 1e-9:
                    raise ValueError("separable factors must be even")
                facs.append(fa)
            if len(facs) != self.grid.dim:
                raise ValueError("need one factor per axis")
            self.factors = tuple(facs)
        if self.convex and not self.is_midpoint_convex():
            raise ValueError("grid function flagged convex fails the midpoint convexity check")

    @classmethod
    def from_callable(cls, grid: CartesianGrid, fn: Callable, convex: bool = False) -> "GridFunction":
        """Evaluate ``fn`` on node coordinates of shape ``(..., dim)``."""
        return cls(grid, fn(grid.nodes()), convex=convex)

    @classmethod
    def from_factors(cls, grid: CartesianGrid, factors: Sequence, convex: bool = False) -> "GridFunction":
        facs = [np.asarray(f, dtype=float) for f in factors]
        if len(facs) == 1 and grid.dim > 1:
            facs = facs * grid.dim
        total = facs[0].reshape((-1,) + (1,) * (grid.dim - 1))
        for j, f in enumerate(facs[1:], start=1):
            shape = [1] * grid.dim
            shape[j] = -1
            total = total + f.reshape(shape)
        return cls(grid, total, tuple(facs), convex)

    @property
    def separable(self) -> bool:
        return self.factors is not None

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def with_values(self, values, convex: bool = False) -> "GridFunction":
        return GridFunction(self.grid, values, None, convex)

    def shifted(self, delta: float) -> "GridFunction":
        facs = None
        if self.factors is not None:
            facs = (self.factors[0] + delta,) + tuple(self.factors[1:])
        return GridFunction(self.grid, self.values + delta, facs, self.convex)

    def at_zero(self) -> float:
        return float(self.values[self.grid.center_index])

    def to_dict(self) -> dict:
        """JSON-ready form; ``+inf`` is written as the string ``"inf"``."""
        flat = ["inf" if math.isinf(v) else float(v) for v in self.values.ravel()]
        return {"dim": self.grid.dim, "kind": "grid_function",
                "grid": {"half_width": self.grid.half_width, "points": self.grid.points_per_axis},
                "values": flat, "convex": bool(self.convex)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridFunction":
        if d.get("kind") != "grid_function":
            raise ValueError(f"expected kind 'grid_function', got {d.get('kind')!r}")
        grid = CartesianGrid(int(d["dim"]), float(d["grid"]["half_width"]), int(d["grid"]["points"]))
        vals = np.array([float(v) for v in d["values"]], dtype=float).reshape(grid.shape)
        return cls(grid, vals, convex=bool(d.get("convex", False)))

    def interpolate(self, points) -> np.ndarray:
        """Linear (1-D) or bilinear (2-D) interpolation at arbitrary points in the box."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator([self.grid.axis] * self.grid.dim, self.values,
                                         bounds_error=False, fill_value=np.inf)
        return interp(np.asarray(points, dtype=float))

    def is_midpoint_convex(self, samples: int = 2000, tol: float = 1e-9, seed: int = 0) -> bool:
        return midpoint_convexity_violation(self.values, samples, seed) <= tol * max(
            1.0, float(np.max(np.abs(self.values[np.isfinite(self.values)]), initial=0.0)))


def midpoint_convexity_violation(values: np.ndarray, samples: int = 2000, seed: int = 0) -> float:
    """Largest ``V(mid) - (V(a)+V(b))/2`` over node pairs whose midpoint is a node."""
    rng = np.random.default_rng(seed)
    shape = values.shape
    a = rng.integers(0, shape[0], size=(samples, len(shape)))
    b = rng.integers(0, shape[0], size=(samples, len(shape)))
    b = b - ((b - a) % 2)  # same parity so the midpoint is a node
    b = np.clip(b, 0, shape[0] - 1)
    b = np.where((b - a) % 2 == 0, b, a)
    mid = (a + b) // 2
    va = values[tuple(a.T)]
    vb = values[tuple(b.T)]
    vm = values[tuple(mid.T)]
    ok = np.isfinite(va) & np.isfinite(vb)
    worst = 0.0
    if np.any(ok & ~np.isfinite(vm)):
        return math.inf
    if np.any(ok):
        worst = float(np.max(vm[ok] - 0.5 * (va[ok] + vb[ok])))
    # adjacent second differences along each axis catch local concavity
    for ax in range(values.ndim):
        lo = np.take(values, range(0, shape[ax] - 2), axis=ax)
        md = np.take(values, range(1, shape[ax] - 1), axis=ax)
        hi = np.take(values, range(2, shape[ax]), axis=ax)
        fin = np.isfinite(lo) & np.isfinite(hi)
        if np.any(fin & ~np.isfinite(md)):
            return math.inf
        if np.any(fin):
            worst = max(worst, float(np.max(md[fin] - 0.5 * (lo[fin] + hi[fin]))))
    return worst


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def node_weights(grid: CartesianGrid, finite_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Trapezoid node weights over the cells whose corners are all finite.

    Without infinities this is the ordinary tensor trapezoid rule.  Cells
    touching a ``+inf`` node are dropped, so an indicator-style potential
    integrates to the volume of the union of its fully-finite cells.
    """
    if finite_mask is None:
        finite_mask = np.ones(grid.shape, dtype=bool)
    ok = finite_mask.astype(float)
    cells = ok
    for ax in range(grid.dim):
        cells = np.minimum(np.take(cells, range(0, grid.points_per_axis - 1), axis=ax),
                           np.take(cells, range(1, grid.points_per_axis), axis=ax))
    w = np.zeros(grid.shape)
    corner = grid.spacing ** grid.dim / 2 ** grid.dim
    for offset in np.ndindex(*(2,) * grid.dim):
        sl = tuple(slice(o, o + grid.points_per_axis - 1) for o in offset)
        w[sl] += cells * corner
    return w


def _density_on(grid: CartesianGrid, m: ReferenceMeasure) -> np.ndarray:
    if m.dim != grid.dim:
        raise ValueError("measure and grid dimensions differ")
    if m.kind == "lebesgue":
        return np.ones(grid.shape)
    return m(grid.nodes())


def integrate_exp(V: GridFunction, alpha: float, m: ReferenceMeasure, full_output: bool = False):
    """Trapezoid quadrature of ``exp(-alpha V) rho`` over the grid.

    With ``full_output=True`` returns ``(value, info)`` where ``info`` holds
    ``truncation`` (node mass on the outermost shell over the total) and
    ``zero`` (the integrand vanishes identically).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    grid = V.grid
    mask = V.finite_mask
    with np.errstate(over="ignore"):
        f = np.where(mask, np.exp(-alpha * np.where(mask, V.values, 0.0)), 0.0) * _density_on(grid, m)
    w = node_weights(grid, mask)
    total = float(np.sum(w * f))
    shell = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[ax] = [0, grid.points_per_axis - 1]
        shell[tuple(idx)] = True
    edge = float(np.sum(f[shell])) * grid.spacing ** grid.dim
    zero = total <= 0.0
    trunc = math.inf if zero else edge / total
    if zero:
        warnings.warn("integrand vanishes on the whole grid (V = +inf everywhere?)", RuntimeWarning,
                      stacklevel=2)
    elif trunc > 1e-3:
        warnings.warn(f"grid truncation diagnostic {trunc:.2e} exceeds 1e-3", TruncationWarning,
                      stacklevel=2)
    if full_output:
        return total, {"truncation": trunc, "zero": zero}
    return total


def expectation(V: GridFunction, alpha: float, m: ReferenceMeasure, g) -> float:
    """``E_mu[g]`` for ``mu`` proportional to ``exp(-alpha V) m`` (``g`` an array on the grid)."""
    mask = V.finite_mask
    f = np.where(mask, np.exp(-alpha * np.where(mask, V.values, 0.0)), 0.0) * _density_on(V.grid, m)
    w = node_weights(V.grid, mask) * f
    g = np.where(mask, g, 0.0)
    return float(np.sum(w * g) / np.sum(w))
