"""Symmetrization of admissible body tuples.

One step along axis ``e_j`` Steiner-symmetrizes slot ``i1`` and rebuilds
slot ``i2`` as the c-polar of the other slots.  Sweeping the axes for every
slot but the last produces unconditional bodies whose measures did not
decrease.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .costs import check_jii_assumption
from .functional import bs_set_value
from .geometry import ReferenceMeasure, StarBody, measure_of_body, section_bounds, steiner_symmetrize
from .transforms import BodyTuple, _cost_flags, c_polar_component, set_admissibility_excess

__all__ = [
    "HypothesisError",
    "SymmetrizationStep",
    "UnconditionalReport",
    "check_axial_monotone_density",
    "check_sectional_log_concavity",
    "jii_symmetrize",
    "unconditionalize",
    "section_average_inclusion",
]

log = logging.getLogger(__name__)

# relative tolerance of measure comparisons; direction-grid quadrature of a
# resampled Steiner symmetral is accurate to a few 1e-4
MEASURE_RTOL = 1e-3
SLACK_TOL = 1e-6


class HypothesisError(ValueError):
    """A symmetrization hypothesis failed; nothing was modified."""


@dataclass
class SymmetrizationStep:
    axis: int
    i1: int
    i2: int
    measure_i1_before: float
    measure_i1_after: float
    measure_i2_before: float
    measure_i2_polar: float     # slot i2 replaced by the c-polar of the untouched slots
    measure_i2_after: float
    slack_before: float
    slack_after: float

    def to_dict(self) -> dict:
        return asdict(self)


def _measures(measures, N: int, dim: int) -> list:
    if measures is None:
        return [ReferenceMeasure.lebesgue(dim)] * N
    if isinstance(measures, ReferenceMeasure):
        return [measures] * N
    ms = list(measures)
    if len(ms) != N:
        raise ValueError(f"need {N} measures, got {len(ms)}")
    return ms


def _probe_points(dim: int, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(samples, dim)) * 1.5


def check_axial_monotone_density(m: ReferenceMeasure, axis: int, samples: int = 64, seed: int = 0,
                                 tol: float = 1e-12) -> bool:
    """``t -> rho(y + t e_axis)`` is even and nonincreasing on ``[0, inf)`` (sampled)."""
    if m.kind == "lebesgue":
        return True
    y = _probe_points(m.dim, samples, seed)
    y[:, axis] = 0.0
    ts = np.linspace(0.0, 4.0, 41)
    e = np.zeros(m.dim)
    e[axis] = 1.0
    prev = None
    for t in ts:
        up, down = m(y + t * e), m(y - t * e)
        scale = np.maximum(np.abs(up), 1e-300)
        if np.any(np.abs(up - down) > tol * scale + 1e-300):
            return False
        if prev is not None and np.any(up > prev * (1 + tol) + 1e-300):
            return False
        prev = up
    return True


def check_sectional_log_concavity(m: ReferenceMeasure, axis: int, samples: int = 64, seed: int = 0,
                                  tol: float = 1e-9) -> bool:
    """``y -> rho(y + t e_axis)`` is even and log-concave on each section (sampled)."""
    if m.kind == "lebesgue":
        return True
    a = _probe_points(m.dim, samples, seed)
    # a second, independent stream; same seed would make b equal to a
    b = _probe_points(m.dim, samples, seed + 1)
    b[:, axis] = a[:, axis]
    flip = a.copy()
    mask = np.arange(m.dim) != axis
    flip[:, mask] *= -1.0
    ra, rf = m(a), m(flip)
    if np.any(np.abs(ra - rf) > 1e-12 * np.maximum(np.abs(ra), 1e-300)):
        return False
    with np.errstate(divide="ignore"):
        la, lb, lm = np.log(ra), np.log(m(b)), np.log(m(0.5 * (a + b)))
    ok = np.isneginf(la) | np.isneginf(lb) | (lm >= 0.5 * (la + lb) - tol)
    return bool(np.all(ok))


def _check_hypotheses(bodies: BodyTuple, j: int, i1: int, i2: int, m1: ReferenceMeasure,
                      m2: ReferenceMeasure):
    cost = bodies.cost
    N, n = cost.N, cost.n
    if not (0 <= i1 < N and 0 <= i2 < N) or i1 == i2:
        raise HypothesisError(f"slot indices ({i1}, {i2}) invalid for N={N}")
    if not 0 <= j < n:
        raise HypothesisError(f"axis {j} out of range for dimension {n}")
    rep = check_jii_assumption(cost, j, i1, i2)
    if not rep.ok:
        raise HypothesisError(f"cost fails the ({j},{i1},{i2}) assumption: {rep}")
    flags = _cost_flags(cost)
    if not (flags["sign"] and flags["convex"]):
        raise HypothesisError("c-polar transform is not known to preserve symmetric convex bodies "
                              "(sign exchange or partial convexity fails)")
    if not check_axial_monotone_density(m1, j):
        raise HypothesisError(f"measure of slot {i1} is not even and decreasing along axis {j}")
    if not check_sectional_log_concavity(m2, j):
        raise HypothesisError(f"measure of slot {i2} is not symmetric log-concave on sections")
    for k, K in enumerate(bodies.bodies):
        if not K.convex:
            raise HypothesisError(f"body {k} is not flagged convex")
    excess = set_admissibility_excess(bodies)
    if excess > SLACK_TOL:
        raise HypothesisError(f"input tuple is not admissible (max cost exceeds 1 by {excess:.3g})")
    return excess


def jii_symmetrize(bodies: BodyTuple, j: int, i1: int, i2: int, measures=None,
                   rtol: float = MEASURE_RTOL):
    """One symmetrization step along axis ``j`` (0-based) for slots ``i1``, ``i2``.

    Slot ``i1`` becomes its Steiner symmetral along ``e_j`` and slot ``i2``
    the c-polar of all other slots.  Hypotheses are checked first and a
    :class:`HypothesisError` is raised without touching the input.

    Returns
    -------
    (BodyTuple, SymmetrizationStep)
    """
    ms = _measures(measures, bodies.N, bodies.grid.dim)
    excess = _check_hypotheses(bodies, j, i1, i2, ms[i1], ms[i2])
    m1_before = measure_of_body(bodies[i1], ms[i1])
    m2_before = measure_of_body(bodies[i2], ms[i2])
    polar = c_polar_component(bodies, i2)
    m2_polar = measure_of_body(polar, ms[i2])

    sym = steiner_symmetrize(bodies[i1], j)
    out = bodies.replace(i1, sym)
    B = c_polar_component(out, i2)
    out = out.replace(i2, B)
    m1_after = measure_of_body(sym, ms[i1])
    m2_after = measure_of_body(B, ms[i2])
    slack_after = -set_admissibility_excess(out)
    step = SymmetrizationStep(j, i1, i2, m1_before, m1_after, m2_before, m2_polar, m2_after,
                              -excess, slack_after)
    if m1_after < m1_before * (1 - rtol):
        raise AssertionError(f"Steiner step lost measure: {m1_before} -> {m1_after}")
    if m2_after < m2_polar * (1 - rtol):
        raise AssertionError(f"polar slot lost measure: {m2_polar} -> {m2_after}")
    if slack_after < -SLACK_TOL:
        raise AssertionError(f"output tuple is not admissible (slack {slack_after:.3g})")
    log.debug("symmetrization step %s", step)
    return out, step


def section_average_inclusion(A: StarBody, B: StarBody, axis: int, heights: Optional[np.ndarray] = None,
                              samples: int = 64) -> float:
    """Worst outward excess of ``(A(r) + A(-r))/2`` beyond ``B(r)``.

    ``A(r)`` is the section of ``A`` at height ``r`` along ``e_axis``; the
    chords run along the other coordinate (planar bodies only).  A value
    ``<= 0`` means containment at every sampled height.
    """
    if A.dim != 2:
        raise ValueError("section averaging is implemented for planar bodies")
    other = 1 - axis
    pa, pb = A.boundary_points, B.boundary_points
    if heights is None:
        top = float(np.max(pa[:, axis]))
        heights = np.linspace(-top, top, samples + 2)[1:-1]
    heights = np.asarray(heights, dtype=float)
    lo_p, hi_p = section_bounds(pa, other, heights)
    lo_m, hi_m = section_bounds(pa, other, -heights)
    blo, bhi = section_bounds(pb, other, heights)
    ok = np.isfinite(lo_p) & np.isfinite(lo_m)
    if not ok.any():
        return -np.inf
    mid_lo = 0.5 * (lo_p + lo_m)
    mid_hi = 0.5 * (hi_p + hi_m)
    empty_b = ~np.isfinite(blo)
    width = np.where(ok, mid_hi - mid_lo, 0.0)
    exc = np.where(empty_b, width, np.maximum(blo - mid_lo, mid_hi - bhi))
    return float(np.max(exc[ok]))


@dataclass
class UnconditionalReport:
    steps: list = field(default_factory=list)
    rounds: int = 0
    converged: bool = False
    asymmetry: list = field(default_factory=list)
    measures_before: list = field(default_factory=list)
    measures_after: list = field(default_factory=list)
    value_before: float = float("nan")
    value_after: float = float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["steps"] = [s.to_dict() if hasattr(s, "to_dict") else s for s in self.steps]
        return d


def unconditionalize(bodies: BodyTuple, measures=None, max_rounds: int = 3, alpha: Optional[Sequence] = None,
                     tol: float = 1e-6, rtol: float = MEASURE_RTOL):
    """Sweep symmetrization steps until every body is unconditional.

    Each round symmetrizes slots ``0..N-2`` along axes ``0..n-1`` in turn,
    always rebuilding the last slot as the c-polar of the others.  The
    sweep order is a choice; running out of rounds is reported through
    ``converged=False`` and the residual asymmetry, not raised.

    Returns
    -------
    (BodyTuple, UnconditionalReport)
    """
    N, n = bodies.N, bodies.grid.dim
    ms = _measures(measures, N, n)
    for k, m in enumerate(ms):
        chk = m.verify()
        if m.kind != "lebesgue" and not (m.log_concave and m.unconditional and chk["ok"]):
            raise HypothesisError(f"measure {k} is not a verified log-concave unconditional measure")
    alpha = tuple(alpha) if alpha is not None else (1.0,) * N
    rep = UnconditionalReport()
    rep.measures_before = [measure_of_body(K, m) for K, m in zip(bodies, ms)]
    rep.value_before = bs_set_value(bodies, alpha, ms)
    cur = bodies
    last = N - 1

    def done(t):
        return [K.asymmetry() for K in t.bodies]

    if max(done(cur)) <= tol:
        rep.converged = True
    while not rep.converged and rep.rounds < max_rounds:
        prev_m = [measure_of_body(K, m) for K, m in zip(cur, ms)]
        prev_v = bs_set_value(cur, alpha, ms)
        for i in range(N - 1):
            for j in range(n):
                cur, step = jii_symmetrize(cur, j, i, last, ms, rtol=rtol)
                rep.steps.append(step)
        rep.rounds += 1
        now_m = [measure_of_body(K, m) for K, m in zip(cur, ms)]
        for k, (a, b) in enumerate(zip(prev_m, now_m)):
            if b < a * (1 - rtol):
                raise AssertionError(f"measure of slot {k} decreased in round {rep.rounds}: {a} -> {b}")
        v = bs_set_value(cur, alpha, ms)
        if v < prev_v * (1 - rtol):
            raise AssertionError(f"set functional decreased in round {rep.rounds}: {prev_v} -> {v}")
        rep.converged = max(done(cur)) <= tol
    rep.asymmetry = done(cur)
    rep.measures_after = [measure_of_body(K, m) for K, m in zip(cur, ms)]
    rep.value_after = bs_set_value(cur, alpha, ms)
    return cur, rep
