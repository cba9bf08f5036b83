"""Synthetic interval targets from exact regression targets.

Each target y becomes [y - p*q, y + (1-p)*q] where q >= 0 is the interval
width and p in [0, 1] its location (p = 0 puts y on the lower boundary,
p = 1 on the upper). Widths are uniform on [q_min, q_max]; locations follow
one of three laws. An optional padding pass widens each interval by a
multiple of its own width on both sides.

All randomness comes from the counter-based Philox generator keyed by
(seed, stream), so row i's draws depend only on (seed, stream, i) and
generation is bit-reproducible across platforms and run orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Interval, IntervalDataset, IntervalSample

__all__ = [
    "UniformRange",
    "MidCentered",
    "BoundaryFavoring",
    "LocationLaw",
    "IntervalGenConfig",
    "generate_intervals",
    "pad_intervals",
]

# Philox stream ids; keep distinct from the training streams in model.py.
_STREAM_WIDTH = 0
_STREAM_LOCATION = 1


def philox_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream); counter-based, reproducible."""
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class UniformRange:
    """p ~ Uniform[p_min, p_max]."""

    p_min: float = 0.0
    p_max: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.p_min <= self.p_max <= 1.0):
            raise ValueError(f"need 0 <= p_min <= p_max <= 1, got [{self.p_min}, {self.p_max}]")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.p_min, self.p_max, size=n)


@dataclass(frozen=True)
class MidCentered:
    """p ~ Uniform[0.5 - c, 0.5 + c]; c = 0 pins the target to the midpoint,
    c = 0.5 recovers the uniform location law."""

    c: float

    def __post_init__(self):
        if not (0.0 <= self.c <= 0.5):
            raise ValueError(f"need 0 <= c <= 0.5, got {self.c}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(0.5 - self.c, 0.5 + self.c, size=n)


@dataclass(frozen=True)
class BoundaryFavoring:
    """p uniform on [0, 0.5 - c] union [0.5 + c, 1].

    c = 0 recovers the uniform law; c = 0.5 degenerates to p in {0, 1} with
    probability 1/2 each (target exactly on one of the two boundaries).
    """

    c: float

    def __post_init__(self):
        if not (0.0 <= self.c <= 0.5):
            raise ValueError(f"need 0 <= c <= 0.5, got {self.c}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # One u ~ U[0,1) picks the segment (halves are equal-length) and the
        # position within it; at c = 0 this is exactly p = u, and at c = 0.5
        # it collapses to the two endpoints.
        u = rng.uniform(0.0, 1.0, size=n)
        half = 0.5 - self.c
        return np.where(u < 0.5, 2.0 * u * half, 0.5 + self.c + (2.0 * u - 1.0) * half)


LocationLaw = UniformRange | MidCentered | BoundaryFavoring


@dataclass(frozen=True)
class IntervalGenConfig:
    q_min: float
    q_max: float
    location: LocationLaw
    pad_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.q_min) and math.isfinite(self.q_max)):
            raise ValueError("q_min/q_max must be finite")
        if not (0.0 <= self.q_min <= self.q_max):
            raise ValueError(f"need 0 <= q_min <= q_max, got [{self.q_min}, {self.q_max}]")
        if self.pad_scale < 0.0:
            raise ValueError(f"pad_scale must be >= 0, got {self.pad_scale}")


def generate_intervals(xs, ys, cfg: IntervalGenConfig) -> IntervalDataset:
    """Turn (features, exact targets) into an interval dataset.

    Row i draws q_i ~ U[q_min, q_max] and p_i from cfg.location and gets the
    interval [y_i - p_i q_i, y_i + (1 - p_i) q_i]; the construction contains
    y_i exactly (p, q nonnegative keep each bound on its own side of y).
    The exact target is kept on every sample as true_y. Deterministic in
    (xs, ys, cfg).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {xs.shape}")
    if ys.shape != (xs.shape[0],):
        raise ValueError(
            f"targets must be a vector matching the {xs.shape[0]} feature rows, got shape {ys.shape}"
        )
    if not np.all(np.isfinite(ys)):
        raise ValueError("targets must be finite")
    n = xs.shape[0]
    q = philox_stream(cfg.seed, _STREAM_WIDTH).uniform(cfg.q_min, cfg.q_max, size=n)
    p = cfg.location.draw(philox_stream(cfg.seed, _STREAM_LOCATION), n)
    lowers = ys - p * q
    uppers = ys + (1.0 - p) * q
    ds = IntervalDataset.from_arrays(xs, lowers, uppers, ys)
    if cfg.pad_scale > 0.0:
        ds = pad_intervals(ds, cfg.pad_scale)
    return ds


def pad_intervals(ds: IntervalDataset, s: float) -> IntervalDataset:
    """Widen every interval [l, u] of width q to [l - s*q, u + s*q].

    Padding keeps the target proportionally closer to the midpoint without
    moving it in absolute terms; zero-width intervals are unchanged.
    """
    if s < 0.0:
        raise ValueError(f"padding scale must be >= 0, got {s}")
    widths = ds.uppers - ds.lowers
    return IntervalDataset(
        [
            IntervalSample(
                smp.features,
                Interval(smp.interval.lower - s * w, smp.interval.upper + s * w),
                smp.true_y,
            )
            for smp, w in zip(ds.samples, widths)
        ]
    )
