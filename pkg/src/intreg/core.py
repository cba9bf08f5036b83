"""Closed-form losses and interval arithmetic for interval-target regression.

Targets are only known up to a closed interval [lower, upper]. The two
workhorse losses are the projection loss (distance to the nearest point of
the interval, zero inside) and the worst-case loss (distance to the farthest
point). Both reduce to evaluating the base loss at interval boundaries.

Everything here is a pure function on immutable values; all arithmetic is
64-bit float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossFamily",
    "Interval",
    "IntervalSample",
    "IntervalDataset",
    "psi_loss",
    "projection_loss",
    "worstcase_loss",
    "worstcase_loss_l1_decomposed",
    "interval_distance",
    "contains",
]


@dataclass(frozen=True)
class LossFamily:
    """The L_p family: loss(a, b) = |a - b|**exponent.

    exponent must be >= 1 so the loss is a nondecreasing transform of the
    absolute deviation. Values above 8 are rejected: on wide intervals the
    powers overflow before any validated configuration needs them.
    """

    exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "exponent", float(self.exponent))
        if not math.isfinite(self.exponent) or not (1.0 <= self.exponent <= 8.0):
            raise ValueError(f"loss exponent must be in [1, 8], got {self.exponent}")


def pow_abs(x, p):
    """|x|**p elementwise, with exact fast paths for p = 1 and p = 2.

    The fast paths are bit-stable shortcuts (x**1.0 == x, and x*x is the
    single-rounding square); every caller in this package goes through this
    helper so identical inputs give identical bits regardless of call site.
    """
    ax = np.abs(x)
    if p == 1.0:
        return ax
    if p == 2.0:
        return ax * ax
    return ax ** p


def pow_abs_grad(x, p):
    """d/dx |x|**p = p |x|**(p-1) sign(x), with subgradient 0 at x = 0."""
    sx = np.sign(x)
    if p == 1.0:
        return sx
    if p == 2.0:
        return 2.0 * np.asarray(x, dtype=float)
    return p * np.abs(x) ** (p - 1.0) * sx


@dataclass(frozen=True)
class Interval:
    """A closed real interval [lower, upper], lower <= upper, both finite.

    lower == upper is the degenerate exact-label case and is legal everywhere.
    """

    lower: float
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"interval bounds must be finite, got [{self.lower}, {self.upper}]")
        if self.lower > self.upper:
            raise ValueError(f"interval lower > upper: [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


def contains(iv: Interval, y: float) -> bool:
    """True iff y lies in [lower, upper] (boundaries inclusive)."""
    return iv.lower <= y <= iv.upper


@dataclass(frozen=True)
class IntervalSample:
    """One supervision row: features x, interval for the target, and
    (for synthetic/benchmark data only) the hidden true target."""

    features: np.ndarray
    interval: Interval
    true_y: float | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 1:
            raise ValueError(f"features must be a 1-D vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", x)
        if self.true_y is not None:
            if not math.isfinite(self.true_y):
                raise ValueError("true_y must be finite")
            if not contains(self.interval, self.true_y):
                raise ValueError(
                    f"true_y={self.true_y} outside interval "
                    f"[{self.interval.lower}, {self.interval.upper}]"
                )


class IntervalDataset:
    """An ordered, nonempty collection of IntervalSample with a common
    feature dimension. Column views (features matrix, bound vectors) are
    materialized once so training loops can stay vectorized."""

    def __init__(self, samples: list[IntervalSample]):
        if len(samples) == 0:
            raise ValueError("empty dataset")
        dim = samples[0].features.shape[0]
        for i, s in enumerate(samples):
            if s.features.shape[0] != dim:
                raise ValueError(
                    f"sample {i} has feature_dim {s.features.shape[0]}, expected {dim}"
                )
        self.samples = list(samples)
        self.feature_dim = dim
        self.features = np.stack([s.features for s in samples])
        self.lowers = np.array([s.interval.lower for s in samples])
        self.uppers = np.array([s.interval.upper for s in samples])
        if all(s.true_y is not None for s in samples):
            self.true_ys = np.array([s.true_y for s in samples])
        else:
            self.true_ys = None

    @classmethod
    def from_arrays(cls, xs, lowers, uppers, true_ys=None) -> "IntervalDataset":
        xs = np.asarray(xs, dtype=float)
        lowers = np.asarray(lowers, dtype=float)
        uppers = np.asarray(uppers, dtype=float)
        if xs.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {xs.shape}")
        n = xs.shape[0]
        if lowers.shape != (n,) or uppers.shape != (n,):
            raise ValueError("bound vectors must match feature matrix row count")
        ys = [None] * n
        if true_ys is not None:
            true_ys = np.asarray(true_ys, dtype=float)
            if true_ys.shape != (n,):
                raise ValueError("true_ys must match feature matrix row count")
            ys = list(true_ys)
        return cls(
            [
                IntervalSample(xs[i], Interval(float(lowers[i]), float(uppers[i])), ys[i])
                for i in range(n)
            ]
        )

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i: int) -> IntervalSample:
        return self.samples[i]

    def has_true_y(self) -> bool:
        return self.true_ys is not None


def psi_loss(family: LossFamily, a: float, b: float) -> float:
    """|a - b|**p. Symmetric, zero iff a == b."""
    return float(pow_abs(a - b, family.exponent))


def projection_loss(family: LossFamily, yhat: float, iv: Interval) -> float:
    """Loss to the nearest admissible target: min over y in [l, u] of |yhat - y|**p.

    Evaluates only the boundaries: the nearest point is l when yhat < l,
    u when yhat > u, and yhat itself inside (loss 0).
    """
    if yhat < iv.lower:
        return psi_loss(family, yhat, iv.lower)
    if yhat > iv.upper:
        return psi_loss(family, yhat, iv.upper)
    return 0.0


def worstcase_loss(family: LossFamily, yhat: float, iv: Interval) -> float:
    """Loss to the farthest admissible target: max over y in [l, u] of |yhat - y|**p.

    The farthest point is u when yhat <= (l+u)/2, else l. At the midpoint both
    branches agree in value; the <= branch is taken for bit-exact determinism.
    Always >= projection_loss on the same inputs.
    """
    if yhat <= iv.midpoint:
        return psi_loss(family, yhat, iv.upper)
    return psi_loss(family, yhat, iv.lower)


def worstcase_loss_l1_decomposed(yhat: float, iv: Interval) -> tuple[float, float]:
    """The L1 worst-case loss split as (|yhat - midpoint|, half-width).

    Their sum equals worstcase_loss with p = 1; the half-width term is
    constant in yhat, which is why minimizing the L1 worst-case loss is
    supervised learning against interval midpoints.
    """
    return abs(yhat - iv.midpoint), 0.5 * iv.width


def interval_distance(family: LossFamily, a: Interval, b: Interval) -> float:
    """max(loss(a.lower, b.upper), loss(a.upper, b.lower)).

    The largest loss achievable by placing one point in each interval;
    symmetric and monotone under widening either argument.
    """
    return max(
        psi_loss(family, a.lower, b.upper),
        psi_loss(family, a.upper, b.lower),
    )
