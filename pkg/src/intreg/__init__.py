"""Regression with interval targets.

Supervision arrives as closed intervals [l, u] guaranteed to contain the
target. The package provides the interval-compatible losses and their
closed forms (core), synthetic interval generation (intervalgen), the
smoothness-based interval-reduction machinery (denoise), a deterministic
from-scratch MLP with optional Lipschitz control (model), the training
objectives (objectives), and a benchmark harness with a CLI (data,
experiment, cli).
"""

from .core import (
    Interval,
    IntervalDataset,
    IntervalSample,
    LossFamily,
    contains,
    interval_distance,
    projection_loss,
    psi_loss,
    worstcase_loss,
    worstcase_loss_l1_decomposed,
)
from .intervalgen import (
    BoundaryFavoring,
    IntervalGenConfig,
    MidCentered,
    UniformRange,
    generate_intervals,
    pad_intervals,
)

__version__ = "0.1.0"
