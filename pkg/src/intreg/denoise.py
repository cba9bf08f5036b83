"""Interval reduction through hypothesis smoothness.

An m-Lipschitz function that (approximately) lies inside every training
interval is pinned down much more tightly than any single interval: each
training point x' imposes the induced bounds [l' - m*dist, u' + m*dist] at a
query x, and intersecting them over the dataset yields the reduced interval.
Hypotheses that only lie inside the intervals up to an average slack eta need
the reduced interval widened by buffer radii (r, s) solved from

    mean_i (r - lower_gap_i)_+^p = eta      (same for s with upper gaps),

where the gaps measure how much worse a point's induced bound is than the
best one. Also here: the concentration diagnostic over gap tails, per-x
intersections of repeated intervals, and the ambiguity radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Interval, IntervalDataset, IntervalSample

__all__ = [
    "BoundGaps",
    "ReducedInterval",
    "DenoiseQuery",
    "induced_bounds",
    "reduced_interval",
    "bound_gaps",
    "bound_gap_arrays",
    "buffer_radius",
    "buffer_upper_bound",
    "gamma_estimate",
    "mean_reduced_width",
    "intersect_groups",
    "ambiguity_radius",
]

_BISECT_ITERS = 200


@dataclass(frozen=True)
class BoundGaps:
    lower_gap: float
    upper_gap: float


@dataclass(frozen=True)
class DenoiseQuery:
    query_x: np.ndarray
    m: float
    eta: float = 0.0
    exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "query_x", np.asarray(self.query_x, dtype=float))
        if self.m <= 0.0:
            raise ValueError(f"Lipschitz constant m must be > 0, got {self.m}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.exponent < 1.0:
            raise ValueError(f"exponent must be >= 1, got {self.exponent}")


@dataclass(frozen=True)
class ReducedInterval:
    """Intersection of induced bounds, plus the slack buffers.

    The effective interval is [base_lower - r_buffer, base_upper + s_buffer].
    arg_lower/arg_upper are the dataset indices whose induced bounds achieve
    the intersection endpoints. empty is True when the bounds cross, which
    legitimately happens when m is below the data's true smoothness.
    """

    base_lower: float
    base_upper: float
    arg_lower: int
    arg_upper: int
    r_buffer: float = 0.0
    s_buffer: float = 0.0

    @property
    def empty(self) -> bool:
        return self.base_lower > self.base_upper

    @property
    def lower(self) -> float:
        return self.base_lower - self.r_buffer

    @property
    def upper(self) -> float:
        return self.base_upper + self.s_buffer


def _distances(features: np.ndarray, query_x: np.ndarray, norm: str) -> np.ndarray:
    query_x = np.asarray(query_x, dtype=float)
    if query_x.shape != (features.shape[1],):
        raise ValueError(
            f"query has dim {query_x.shape}, dataset has feature_dim {features.shape[1]}"
        )
    diff = features - query_x
    if norm == "l2":
        return np.sqrt(np.sum(diff * diff, axis=1))
    if norm == "linf":
        return np.max(np.abs(diff), axis=1)
    raise ValueError(f"unknown norm {norm!r} (use 'l2' or 'linf')")


def induced_bounds(
    sample: IntervalSample, m: float, query_x: np.ndarray, norm: str = "l2"
) -> Interval:
    """Bounds a single neighbor imposes at query_x: [l' - m*d, u' + m*d]."""
    if m <= 0.0:
        raise ValueError(f"Lipschitz constant m must be > 0, got {m}")
    d = float(_distances(sample.features[None, :], query_x, norm)[0])
    return Interval(sample.interval.lower - m * d, sample.interval.upper + m * d)


def reduced_interval(
    ds: IntervalDataset, m: float, query_x: np.ndarray, norm: str = "l2"
) -> ReducedInterval:
    """Intersect the induced bounds of every dataset point at query_x.

    Returns the tightest admissible region for any m-Lipschitz hypothesis
    lying inside all intervals; possibly empty (flagged, not raised). When
    query_x is a dataset point the result is contained in that point's own
    interval, since its own induced bounds are the interval itself.
    """
    if m <= 0.0:
        raise ValueError(f"Lipschitz constant m must be > 0, got {m}")
    d = _distances(ds.features, query_x, norm)
    lo = ds.lowers - m * d
    hi = ds.uppers + m * d
    i_lo = int(np.argmax(lo))
    i_hi = int(np.argmin(hi))
    return ReducedInterval(float(lo[i_lo]), float(hi[i_hi]), i_lo, i_hi)


def bound_gap_arrays(
    ds: IntervalDataset, m: float, query_x: np.ndarray, norm: str = "l2"
) -> tuple[np.ndarray, np.ndarray]:
    """(lower_gaps, upper_gaps) of every sample at query_x.

    lower_gap_i = best_lower - induced_lower_i >= 0, and 0 at the argmax
    sample; upper gaps analogous. Requires a nonempty reduced interval.
    """
    if m <= 0.0:
        raise ValueError(f"Lipschitz constant m must be > 0, got {m}")
    d = _distances(ds.features, query_x, norm)
    lo = ds.lowers - m * d
    hi = ds.uppers + m * d
    best_lo = np.max(lo)
    best_hi = np.min(hi)
    if best_lo > best_hi:
        raise ValueError("reduced interval is empty at this query; gaps are undefined")
    return best_lo - lo, hi - best_hi


def bound_gaps(
    ds: IntervalDataset, m: float, query_x: np.ndarray, sample_index: int, norm: str = "l2"
) -> BoundGaps:
    lg, ug = bound_gap_arrays(ds, m, query_x, norm)
    return BoundGaps(float(lg[sample_index]), float(ug[sample_index]))


def _solve_buffer(gaps: np.ndarray, p: float, eta: float) -> float:
    """Root of phi(r) = mean((r - gaps)_+^p) - eta by bisection.

    phi is continuous and nondecreasing, phi(0) = 0 (gaps >= 0), and at the
    bracket top r = max(gaps) + eta^(1/p) every term is >= eta, so the root
    is bracketed. 200 halvings take the bracket to float resolution.
    """
    if eta == 0.0:
        return 0.0

    def phi(r: float) -> float:
        z = np.maximum(r - gaps, 0.0)
        if p == 1.0:
            return float(np.mean(z))
        if p == 2.0:
            return float(np.mean(z * z))
        return float(np.mean(z ** p))

    lo = 0.0
    hi = float(np.max(gaps)) + eta ** (1.0 / p)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi(mid) < eta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def buffer_radius(ds: IntervalDataset, q: DenoiseQuery, norm: str = "l2") -> tuple[float, float]:
    """Buffer radii (r, s) widening the reduced interval to admit hypotheses
    with average projection slack up to eta.

    Population expectations are replaced by empirical means over ds. eta = 0
    gives exactly (0, 0).
    """
    lg, ug = bound_gap_arrays(ds, q.m, q.query_x, norm)
    r = _solve_buffer(lg, q.exponent, q.eta)
    s = _solve_buffer(ug, q.exponent, q.eta)
    return r, s


def buffer_upper_bound(
    ds: IntervalDataset, q: DenoiseQuery, delta_grid, norm: str = "l2"
) -> tuple[float, float]:
    """Closed-form upper bound on the buffer radii over a grid of thresholds:
    min over delta of  delta + (eta / fraction(gap <= delta))^(1/p).

    Grid entries whose empirical tail probability is zero are skipped;
    dominates buffer_radius componentwise.
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    if delta_grid.size == 0:
        raise ValueError("delta_grid must be nonempty")
    if np.any(delta_grid < 0.0):
        raise ValueError("delta_grid entries must be >= 0")
    lg, ug = bound_gap_arrays(ds, q.m, q.query_x, norm)

    def bound(gaps: np.ndarray) -> float:
        best = math.inf
        for delta in delta_grid:
            pr = float(np.mean(gaps <= delta))
            if pr == 0.0:
                continue
            best = min(best, float(delta) + (q.eta / pr) ** (1.0 / q.exponent))
        if math.isinf(best):
            raise ValueError("every delta in the grid has zero empirical probability")
        return best

    return bound(lg), bound(ug)


def gamma_estimate(
    ds: IntervalDataset, m: float, tau: float, query_points, norm: str = "l2"
) -> float:
    """Average over query points of 1 / min(frac(lg <= tau), frac(ug <= tau)).

    Measures how concentrated small bound gaps are; nonincreasing in tau and
    finite whenever each query point is itself a dataset point (its own gaps
    are zero, so both fractions are at least 1/n).
    """
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    query_points = np.asarray(query_points, dtype=float)
    if query_points.ndim != 2:
        raise ValueError("query_points must be a 2-D feature matrix")
    total = 0.0
    for i in range(query_points.shape[0]):
        lg, ug = bound_gap_arrays(ds, m, query_points[i], norm)
        frac = min(float(np.mean(lg <= tau)), float(np.mean(ug <= tau)))
        if frac == 0.0:
            raise ValueError(f"query {i}: no sample has a bound gap <= tau on one side")
        total += 1.0 / frac
    return total / query_points.shape[0]


def mean_reduced_width(
    ds: IntervalDataset, m: float, query_points, norm: str = "l2"
) -> float:
    """Average reduced-interval width over query points: the empirical
    irreducible error term of the generalization bound. Empty intersections
    contribute width 0 (they admit no hypothesis at all)."""
    query_points = np.asarray(query_points, dtype=float)
    if query_points.ndim != 2:
        raise ValueError("query_points must be a 2-D feature matrix")
    widths = []
    for i in range(query_points.shape[0]):
        red = reduced_interval(ds, m, query_points[i], norm)
        widths.append(0.0 if red.empty else red.base_upper - red.base_lower)
    return float(np.mean(widths))


def intersect_groups(groups) -> list[tuple[np.ndarray, Interval | None]]:
    """Per-x intersection of repeated intervals: [max lowers, min uppers].

    groups is a list of (feature vector, list of Interval); a crossed
    intersection yields None for that group.
    """
    out = []
    for x, intervals in groups:
        if len(intervals) == 0:
            raise ValueError("each group must contain at least one interval")
        lo = max(iv.lower for iv in intervals)
        hi = min(iv.upper for iv in intervals)
        out.append((x, Interval(lo, hi) if lo <= hi else None))
    return out


def ambiguity_radius(groups) -> float:
    """Smallest r such that every group's interval intersection lies within
    a ball of radius r around that group's true target.

    groups is a list of (feature vector, true_y, list of Interval); every
    interval must contain its group's true_y (that is the interval-target
    contract), which also keeps the intersections nonempty. Zero iff every
    intersection is the singleton {true_y}.
    """
    worst = 0.0
    for x, true_y, intervals in groups:
        if len(intervals) == 0:
            raise ValueError("each group must contain at least one interval")
        for iv in intervals:
            if not (iv.lower <= true_y <= iv.upper):
                raise ValueError(
                    f"interval [{iv.lower}, {iv.upper}] excludes its true target {true_y}"
                )
        lo = max(iv.lower for iv in intervals)
        hi = min(iv.upper for iv in intervals)
        worst = max(worst, true_y - lo, hi - true_y)
    return worst
