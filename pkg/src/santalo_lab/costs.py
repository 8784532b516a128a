"""Cost families and sampled checks of their structural hypotheses.

A :class:`CostSpec` evaluates ``c(x_1, ..., x_N)`` vectorised over leading
axes: every ``x_i`` is an array of shape ``(..., n)`` and the result has the
broadcast leading shape.  The checks below certify the structural
hypotheses used by the theorems (multi-homogeneity, sign symmetry, partial
convexity, the axis/slot assumption used by symmetrization) on seeded random
samples and return counterexamples as witnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "FAMILIES",
    "CostSpec",
    "HomogeneityReport",
    "SignSymmetryWitness",
    "ConvexityReport",
    "JiiReport",
    "cost_eval",
    "detect_multi_homogeneity",
    "check_sign_symmetry",
    "check_partial_convexity",
    "check_jii_assumption",
    "snap_rational",
]

FAMILIES = (
    "product",
    "weighted-product",
    "absolute-weighted-product",
    "inner-product",
    "barycentric",
    "log-inner-product",
    "custom",
)

_ALIASES = {f.replace("-", "_"): f for f in FAMILIES}


def snap_rational(value: float, tol: float = 1e-9, max_den: int = 12):
    """Nearest simple fraction when within ``tol``; otherwise the float."""
    if not math.isfinite(value):
        return value
    frac = Fraction(value).limit_denominator(max_den)
    return frac if abs(float(frac) - value) <= tol else value


def _as_fraction(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, str)):
        return Fraction(v)
    return Fraction(v).limit_denominator(10**6) if abs(
        float(Fraction(v).limit_denominator(10**6)) - v) <= 1e-15 else v


@dataclass(eq=False)
class CostSpec:
    """A cost family with its parameters.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES` (underscores are accepted for hyphens).
    N, n : int
        Number of marginals and the ambient dimension.
    params : dict
        ``weighted-product``: ``alpha`` (length ``N``), exponents are
        ``1/alpha_i``.  ``absolute-weighted-product``: ``exponents``, either
        length ``N`` or an ``N x n`` array ``p_ij``.  ``barycentric``:
        optional ``scale`` (default 1) multiplying the ordered-pair sum.
        ``custom``: ``fn`` (vectorised callable ``fn(*xs)``) and optional
        declared ``degrees``, ``sign_symmetric``, ``convex``.
    """

    family: str
    N: int
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        fam = _ALIASES.get(self.family, self.family)
        if fam not in FAMILIES:
            raise ValueError(f"unknown cost family {self.family!r}")
        self.family = fam
        if self.N < 2:
            raise ValueError("a cost needs at least two marginals")
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        p = dict(self.params)
        if fam in ("inner-product", "log-inner-product") and self.N != 2:
            raise ValueError(f"{fam} cost is defined for N=2 only")
        if fam == "weighted-product":
            alpha = [_as_fraction(a) for a in p.get("alpha", ())]
            if len(alpha) != self.N or any(a <= 0 for a in alpha):
                raise ValueError("weighted-product needs N positive alpha values")
            p["alpha"] = alpha
        if fam == "absolute-weighted-product":
            e = np.asarray(p.get("exponents", ()), dtype=float)
            if e.shape == (self.N,):
                e = np.repeat(e[:, None], self.n, axis=1)
            if e.shape != (self.N, self.n) or np.any(e <= 0):
                raise ValueError("absolute-weighted-product needs positive exponents (N or N x n)")
            p["exponents"] = e
        if fam == "barycentric":
            p.setdefault("scale", 1.0)
        if fam == "custom" and not callable(p.get("fn")):
            raise ValueError("custom cost needs a callable 'fn'")
        self.params = p

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, *xs) -> np.ndarray:
        if len(xs) != self.N:
            raise ValueError(f"expected {self.N} arguments, got {len(xs)}")
        xs = [np.asarray(x, dtype=float) for x in xs]
        for x in xs:
            if x.shape[-1:] != (self.n,):
                raise ValueError(f"argument has trailing dimension {x.shape[-1:]}, expected ({self.n},)")
        fam = self.family
        if fam == "product":
            prod = xs[0]
            for x in xs[1:]:
                prod = prod * x
            return prod.sum(axis=-1)
        if fam in ("weighted-product", "absolute-weighted-product"):
            e = self.coordinate_exponents()
            prod = np.abs(xs[0]) ** e[0]
            for i, x in enumerate(xs[1:], start=1):
                prod = prod * np.abs(x) ** e[i]
            return prod.sum(axis=-1)
        if fam == "inner-product":
            return np.sum(xs[0] * xs[1], axis=-1)
        if fam == "log-inner-product":
            ip = np.sum(xs[0] * xs[1], axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(ip > 0, np.log(np.where(ip > 0, ip, 1.0)), -np.inf)
        if fam == "barycentric":
            s = xs[0]
            for x in xs[1:]:
                s = s + x
            sq = sum(np.sum(x * x, axis=-1) for x in xs)
            # sum over ordered pairs i != j of <x_i, x_j> = |sum x|^2 - sum |x_i|^2
            return self.params["scale"] * (np.sum(s * s, axis=-1) - sq)
        return np.asarray(self.params["fn"](*xs), dtype=float)

    __call__ = evaluate

    # -- structure ----------------------------------------------------------

    def coordinate_exponents(self) -> Optional[np.ndarray]:
        """``N x n`` exponents of the absolute-value product families."""
        if self.family == "weighted-product":
            a = np.array([1.0 / float(x) for x in self.params["alpha"]])
            return np.repeat(a[:, None], self.n, axis=1)
        if self.family == "absolute-weighted-product":
            return self.params["exponents"]
        return None

    @property
    def coordinate_separable(self) -> bool:
        """``c = sum_j prod_i g_ij(x_ij)``: the sup splits over coordinates."""
        return self.family in ("product", "weighted-product", "absolute-weighted-product") or (
            self.family == "inner-product")

    def coordinate_factor(self, i: int, j: int, t: np.ndarray) -> np.ndarray:
        """Scalar factor ``g_ij(t)`` of a coordinate-separable cost."""
        if self.family in ("product", "inner-product"):
            return np.asarray(t, dtype=float)
        e = self.coordinate_exponents()
        if e is None:
            raise ValueError(f"{self.family} cost is not coordinate-separable")
        return np.abs(t) ** e[i, j]

    def declared_degrees(self):
        """Per-marginal homogeneity degrees implied by the family (exact when rational)."""
        fam = self.family
        if fam in ("product", "inner-product"):
            return tuple(Fraction(1) for _ in range(self.N))
        if fam == "weighted-product":
            return tuple(1 / a if isinstance(a, Fraction) else 1.0 / a for a in self.params["alpha"])
        if fam == "absolute-weighted-product":
            e = self.params["exponents"]
            if np.all(e == e[:, :1]):
                return tuple(snap_rational(float(v)) for v in e[:, 0])
            return None
        if fam == "custom":
            d = self.params.get("degrees")
            return tuple(d) if d is not None else None
        return None

    def to_dict(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if k == "fn":
                continue
            if isinstance(v, np.ndarray):
                v = v.tolist()
            if isinstance(v, list):
                v = [str(x) if isinstance(x, Fraction) else x for x in v]
            params[k] = v
        return {"family": self.family, "N": self.N, "n": self.n, "params": params}

    @classmethod
    def from_dict(cls, d: dict) -> "CostSpec":
        params = dict(d.get("params", {}))
        if "alpha" in params:
            params["alpha"] = [Fraction(a) if isinstance(a, str) else a for a in params["alpha"]]
        return cls(d["family"], int(d["N"]), int(d["n"]), params)

    def __repr__(self):
        return f"CostSpec({self.family!r}, N={self.N}, n={self.n})"


def cost_eval(spec: CostSpec, x: Sequence) -> float:
    """Cost of a single tuple ``(x_1, ..., x_N)`` of vectors."""
    if len(x) != spec.N:
        raise ValueError(f"tuple has {len(x)} entries, cost expects {spec.N}")
    xs = [np.atleast_1d(np.asarray(v, dtype=float)) for v in x]
    for v in xs:
        if v.shape != (spec.n,):
            raise ValueError(f"vector of shape {v.shape} does not match dimension {spec.n}")
    return float(spec.evaluate(*xs))


def _sample(spec: CostSpec, samples: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [rng.normal(size=(samples, spec.n)) for _ in range(spec.N)]


def _close(a, b, tol) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    same_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
    with np.errstate(invalid="ignore"):
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        ok = np.abs(a - b) <= tol * scale
    return same_inf | np.where(np.isfinite(a) & np.isfinite(b), ok, False)


# ---------------------------------------------------------------------------
# homogeneity
# ---------------------------------------------------------------------------


@dataclass
class HomogeneityReport:
    joint_degree: Optional[object]
    degrees: Optional[tuple]
    residual: float
    marginal_residuals: tuple = ()
    joint_residual: float = math.inf

    @property
    def multi_homogeneous(self) -> bool:
        return self.degrees is not None


_SCALES = (0.5, 2.0, 3.0)


def _fit_degree(base: np.ndarray, scaled: dict) -> tuple:
    """Degree from log-ratios, then the worst relative residual of ``c(tx) = t^d c(x)``."""
    est = []
    for t, val in scaled.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = val / base
        ok = np.isfinite(ratio) & (ratio > 0) & (np.abs(base) > 1e-6)
        if np.any(ok):
            est.append(np.log(ratio[ok]) / math.log(t))
    if not est:
        return None, math.inf
    d = float(np.median(np.concatenate(est)))
    worst = 0.0
    for t, val in scaled.items():
        pred = t ** d * base
        with np.errstate(invalid="ignore"):
            err = np.abs(val - pred) / np.maximum(1.0, np.maximum(np.abs(val), np.abs(pred)))
        err = np.where(np.isfinite(val) | np.isfinite(pred), err, 0.0)
        worst = max(worst, float(np.max(np.nan_to_num(err, nan=math.inf))))
    return snap_rational(d), worst


def detect_multi_homogeneity(spec: CostSpec, samples: int = 64, tol: float = 1e-9,
                             seed: int = 0) -> HomogeneityReport:
    """Fit per-marginal and joint homogeneity degrees on random points.

    A degree is reported only when the residual of ``c(.., t x_i, ..) =
    t^{p_i} c(x)`` at ``t`` in {0.5, 2, 3} is below ``tol`` on every sample;
    degrees within 1e-9 of a fraction with denominator <= 12 are returned
    as :class:`fractions.Fraction`.
    """
    if samples < 32:
        raise ValueError("need at least 32 samples")
    xs = _sample(spec, samples, seed)
    base = spec.evaluate(*xs)
    degs, res = [], []
    for i in range(spec.N):
        scaled = {}
        for t in _SCALES:
            ys = list(xs)
            ys[i] = t * xs[i]
            scaled[t] = spec.evaluate(*ys)
        d, r = _fit_degree(base, scaled)
        degs.append(d)
        res.append(r)
    joint_scaled = {t: spec.evaluate(*[t * x for x in xs]) for t in _SCALES}
    jd, jr = _fit_degree(base, joint_scaled)
    per = tuple(degs) if all(d is not None and r < tol for d, r in zip(degs, res)) else None
    joint = jd if jr < tol else None
    if per is not None:
        total = sum(per)
        if joint is None or abs(float(total) - float(joint)) > 1e-12:
            # per-marginal degrees determine the joint one
            joint = total
    worst = max(res) if per is not None else min(max(res), jr)
    return HomogeneityReport(joint, per, float(worst), tuple(res), float(jr))


# ---------------------------------------------------------------------------
# sign symmetry
# ---------------------------------------------------------------------------


@dataclass
class SignSymmetryWitness:
    """Outcome of the sign-symmetry search for marginal ``index`` (0-based).

    On success ``signs`` holds ``(s_1, ..., s_N)`` with ``s_index = +1``; on
    failure ``signs`` is None and ``sample`` is the first failing tuple of
    the all-plus candidate search (lowest sample index).
    """

    index: int
    signs: Optional[tuple]
    sample: Optional[list] = None
    residual: float = 0.0

    @property
    def ok(self) -> bool:
        return self.signs is not None


def _sign_candidates(N: int, i: int):
    others = [k for k in range(N) if k != i]
    for mask in range(2 ** (N - 1)):
        s = [1] * N
        for b, k in enumerate(others):
            if mask >> b & 1:
                s[k] = -1
        yield tuple(s)


def check_sign_symmetry(spec: CostSpec, i: int, samples: int = 64, seed: int = 0,
                        tol: float = 1e-12) -> SignSymmetryWitness:
    """Search sign vectors ``s`` with ``c(.., -x_i, ..) = c(s_1 x_1, .., x_i, .., s_N x_N)``."""
    if not 0 <= i < spec.N:
        raise ValueError(f"marginal index {i} out of range")
    xs = _sample(spec, samples, seed)
    flipped = list(xs)
    flipped[i] = -xs[i]
    lhs = spec.evaluate(*flipped)
    first_fail = None
    for s in _sign_candidates(spec.N, i):
        rhs = spec.evaluate(*[sk * x for sk, x in zip(s, xs)])
        ok = _close(lhs, rhs, tol)
        if np.all(ok):
            with np.errstate(invalid="ignore"):
                diff = np.where(np.isfinite(lhs), np.abs(lhs - rhs), 0.0)
            return SignSymmetryWitness(i, s, None, float(np.max(diff)))
        if first_fail is None:
            k = int(np.argmin(ok))
            first_fail = ([x[k].tolist() for x in xs], float(abs(lhs[k] - rhs[k])))
    return SignSymmetryWitness(i, None, first_fail[0], first_fail[1])


# ---------------------------------------------------------------------------
# convexity
# ---------------------------------------------------------------------------


@dataclass
class ConvexityReport:
    index: int
    ok: bool
    worst_violation: float
    witness: Optional[list] = None

    def __bool__(self):
        return self.ok


def check_partial_convexity(spec: CostSpec, i: int, samples: int = 256, seed: int = 0,
                            tol: float = 1e-9) -> ConvexityReport:
    """Sampled midpoint convexity of ``x_i -> c(x)`` with the other slots frozen."""
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=(samples, spec.n)) for _ in range(spec.N)]
    a = 1.5 * rng.normal(size=(samples, spec.n))
    b = 1.5 * rng.normal(size=(samples, spec.n))

    def at(v):
        ys = list(xs)
        ys[i] = v
        return spec.evaluate(*ys)

    ca, cb, cm = at(a), at(b), at(0.5 * (a + b))
    fin = np.isfinite(ca) & np.isfinite(cb)
    with np.errstate(invalid="ignore"):
        viol = (cm - 0.5 * (ca + cb)) / np.maximum(1.0, np.maximum(np.abs(ca), np.abs(cb)))
    viol = np.where(fin, np.nan_to_num(viol, nan=math.inf, posinf=math.inf), -math.inf)
    k = int(np.argmax(viol))
    worst = float(max(viol[k], 0.0))
    ok = worst <= tol
    witness = None if ok else [[x[k].tolist() for x in xs], a[k].tolist(), b[k].tolist()]
    return ConvexityReport(i, ok, worst, witness)


# ---------------------------------------------------------------------------
# the (axis, slot, slot) assumption used by symmetrization
# ---------------------------------------------------------------------------


@dataclass
class JiiReport:
    """Sampled check of level-set convexity (item 2) and sign exchange (item 3).

    ``axis`` and the slot indices are 0-based.  Item 2 is checked for the
    pairing ``(y_{i1}, t_{i2})`` and also for ``(t_{i1}, y_{i2})``, the one
    used when averaging sections during the symmetrization step.
    """

    axis: int
    i1: int
    i2: int
    level_sets_ok: bool
    sign_exchange_ok: bool
    worst_quasiconvexity: float
    worst_sign_residual: float
    witness: Optional[dict] = None

    @property
    def ok(self) -> bool:
        return self.level_sets_ok and self.sign_exchange_ok


def _quasiconvex_violation(f: Callable, dim: int, samples: int, rng) -> tuple:
    """Worst ``f(mid) - max(f(a), f(b))`` over random pairs and equal-value pairs."""
    a = 1.5 * rng.normal(size=(samples, dim))
    b = 1.5 * rng.normal(size=(samples, dim))
    fa, fb = f(a), f(b)
    # equal-value partners: bisect along a random ray from the origin for f = f(a)
    u = rng.normal(size=(samples, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lo = np.zeros(samples)
    hi = np.full(samples, 8.0)
    f0 = f(np.zeros((samples, dim)))
    fhi = f(hi[:, None] * u)
    bracket = ((f0 - fa) * (fhi - fa) < 0) & np.isfinite(fa) & np.isfinite(fhi) & np.isfinite(f0)
    sign0 = np.sign(f0 - fa)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = f(mid[:, None] * u)
        same = np.sign(fm - fa) == sign0
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    b2 = (0.5 * (lo + hi))[:, None] * u
    A = np.concatenate([a, a[bracket]])
    B = np.concatenate([b, b2[bracket]])
    FA = np.concatenate([fa, fa[bracket]])
    FB = np.concatenate([fb, np.maximum(fa[bracket], f(b2[bracket]) if bracket.any() else fa[bracket])])
    FM = f(0.5 * (A + B))
    top = np.maximum(FA, FB)
    fin = np.isfinite(top)
    with np.errstate(invalid="ignore"):
        viol = np.where(fin, (FM - top) / np.maximum(1.0, np.abs(top)), -math.inf)
    k = int(np.argmax(viol))
    return float(max(viol[k], 0.0)), (A[k].tolist(), B[k].tolist())


def check_jii_assumption(spec: CostSpec, j: int, i1: int, i2: int, samples: int = 256,
                         seed: int = 0, tol: float = 1e-9) -> JiiReport:
    """Sampled check of the symmetrization hypotheses for axis ``j`` and slots ``i1 != i2``."""
    if i1 == i2:
        raise ValueError("i1 and i2 must differ")
    n = spec.n
    if not 0 <= j < n:
        raise ValueError(f"axis {j} out of range")
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=(samples, n)) for _ in range(spec.N)]

    # item (3): flipping t_{i1} equals flipping t_{i2}
    ya, yb = list(xs), list(xs)
    ya[i1] = xs[i1].copy()
    ya[i1][:, j] *= -1
    yb[i2] = xs[i2].copy()
    yb[i2][:, j] *= -1
    ca, cb = spec.evaluate(*ya), spec.evaluate(*yb)
    close = _close(ca, cb, 1e-12)
    with np.errstate(invalid="ignore"):
        sign_res = float(np.max(np.where(np.isfinite(ca), np.abs(ca - cb), 0.0)))
    sign_ok = bool(np.all(close))
    witness = {}
    if not sign_ok:
        k = int(np.argmin(close))
        witness["sign"] = [x[k].tolist() for x in xs]

    # item (2): quasi-convexity in the free pair, other slots frozen (one frozen tuple per batch)
    others = [k for k in range(n) if k != j]
    worst = 0.0
    for pairing in ("y_i1,t_i2", "t_i1,y_i2"):
        ycoords = (i1, others) if pairing == "y_i1,t_i2" else (i2, others)
        tslot = i2 if pairing == "y_i1,t_i2" else i1
        dim = len(others) + 1
        for trial in range(8):
            frozen = [rng.normal(size=n) for _ in range(spec.N)]

            def f(z, frozen=frozen, ycoords=ycoords, tslot=tslot):
                m = z.shape[0]
                args = [np.tile(v, (m, 1)) for v in frozen]
                yslot, cols = ycoords
                if cols:
                    args[yslot][:, cols] = z[:, :-1]
                args[tslot][:, j] = z[:, -1]
                return spec.evaluate(*args)

            v, wit = _quasiconvex_violation(f, dim, max(samples // 8, 16), rng)
            if v > worst:
                worst = v
                witness["level_set"] = {"pairing": pairing, "frozen": [x.tolist() for x in frozen],
                                        "a": wit[0], "b": wit[1]}
    level_ok = worst <= tol
    if level_ok:
        witness.pop("level_set", None)
    return JiiReport(j, i1, i2, level_ok, sign_ok, worst, sign_res, witness or None)
