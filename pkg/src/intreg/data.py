"""Dataset ingestion, splits, and target rescaling.

Two CSV schemas are understood:

  labeled:   f1..fd, y            exact targets
  interval:  f1..fd, l, u[, y]    interval targets, y optional and used
                                  only for evaluation

Rows are parsed strictly: every referenced cell must be a finite number,
every interval must satisfy l <= u, and problems are reported with the file
line they came from.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import IntervalDataset
from .intervalgen import philox_stream

__all__ = [
    "DataError",
    "LabeledDataset",
    "SplitSpec",
    "RescaleParams",
    "load_labeled_csv",
    "load_interval_csv",
    "write_labeled_csv",
    "write_interval_csv",
    "split",
    "rescale_targets",
]

_STREAM_SPLIT = 30


class DataError(ValueError):
    """A problem with input data files or their contents."""


@dataclass
class LabeledDataset:
    """Plain regression data: features plus exact targets."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.ndim != 2 or self.ys.shape != (self.xs.shape[0],):
            raise DataError(
                f"feature matrix {self.xs.shape} and targets {self.ys.shape} do not line up"
            )

    def __len__(self) -> int:
        return self.xs.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0.0 or f > 1.0 for f in fracs):
            raise DataError(f"split fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {fracs}")


@dataclass(frozen=True)
class RescaleParams:
    """Target scale factor, computed from the training split only."""

    scale: float
    applied_to: str = "y"


def _read_rows(path):
    try:
        f = open(path, newline="")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    with f:
        reader = csv.reader(f)
        rows = [row for row in reader if row and not row[0].startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(rows) == 1:
        raise DataError(f"{path}: empty dataset (header only)")
    return header, rows[1:]


def _column_indices(path, header, names):
    idx = {}
    for name in names:
        if name not in header:
            raise DataError(f"{path}: missing column {name!r} (header: {header})")
        idx[name] = header.index(name)
    return idx


def _check_row_width(path, row_number, row, header):
    if len(row) < len(header):
        raise DataError(
            f"{path}: row {row_number}: expected {len(header)} cells, got {len(row)}"
        )


def _parse_cell(path, row_number, name, text):
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"{path}: row {row_number}: column {name!r} is not numeric: {text!r}"
        ) from None
    if not math.isfinite(value):
        raise DataError(f"{path}: row {row_number}: column {name!r} is not finite: {text!r}")
    return value


def _infer_features(header, reserved):
    feats = [c for c in header if c not in reserved]
    if not feats:
        raise DataError(f"no feature columns left after removing {sorted(reserved)}")
    return feats


def load_labeled_csv(path, feature_columns=None, target_column="y") -> LabeledDataset:
    """Read the labeled schema. feature_columns defaults to every column
    except the target, in file order."""
    header, rows = _read_rows(path)
    if feature_columns is None:
        feature_columns = _infer_features(header, {target_column})
    idx = _column_indices(path, header, list(feature_columns) + [target_column])
    xs, ys = [], []
    for r, row in enumerate(rows, start=2):  # row 1 is the header
        _check_row_width(path, r, row, header)
        xs.append([_parse_cell(path, r, c, row[idx[c]]) for c in feature_columns])
        ys.append(_parse_cell(path, r, target_column, row[idx[target_column]]))
    return LabeledDataset(np.array(xs), np.array(ys))


def load_interval_csv(
    path,
    feature_columns=None,
    lower_column="l",
    upper_column="u",
    target_column="y",
) -> IntervalDataset:
    """Read the interval schema; the y column is optional. Rows with l > u
    or with y outside [l, u] are rejected with their row number."""
    header, rows = _read_rows(path)
    has_y = target_column in header
    reserved = {lower_column, upper_column} | ({target_column} if has_y else set())
    if feature_columns is None:
        feature_columns = _infer_features(header, reserved)
    wanted = list(feature_columns) + [lower_column, upper_column] + (
        [target_column] if has_y else []
    )
    idx = _column_indices(path, header, wanted)
    xs, lowers, uppers, ys = [], [], [], []
    for r, row in enumerate(rows, start=2):
        _check_row_width(path, r, row, header)
        xs.append([_parse_cell(path, r, c, row[idx[c]]) for c in feature_columns])
        lo = _parse_cell(path, r, lower_column, row[idx[lower_column]])
        hi = _parse_cell(path, r, upper_column, row[idx[upper_column]])
        if lo > hi:
            raise DataError(f"{path}: row {r}: interval lower {lo} > upper {hi}")
        lowers.append(lo)
        uppers.append(hi)
        if has_y:
            y = _parse_cell(path, r, target_column, row[idx[target_column]])
            if not (lo <= y <= hi):
                raise DataError(f"{path}: row {r}: target {y} outside interval [{lo}, {hi}]")
            ys.append(y)
    return IntervalDataset.from_arrays(
        np.array(xs), np.array(lowers), np.array(uppers), np.array(ys) if has_y else None
    )


def write_labeled_csv(path, data: LabeledDataset) -> None:
    d = data.xs.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i + 1}" for i in range(d)] + ["y"])
        for i in range(len(data)):
            w.writerow([repr(float(v)) for v in data.xs[i]] + [repr(float(data.ys[i]))])


def write_interval_csv(path, ds: IntervalDataset) -> None:
    d = ds.feature_dim
    has_y = ds.true_ys is not None
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i + 1}" for i in range(d)] + ["l", "u"] + (["y"] if has_y else []))
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]]
            row += [repr(float(ds.lowers[i])), repr(float(ds.uppers[i]))]
            if has_y:
                row.append(repr(float(ds.true_ys[i])))
            w.writerow(row)


def _take(dataset, indices):
    if isinstance(dataset, LabeledDataset):
        return LabeledDataset(dataset.xs[indices], dataset.ys[indices])
    if isinstance(dataset, IntervalDataset):
        return IntervalDataset([dataset.samples[i] for i in indices])
    raise TypeError(f"cannot split {type(dataset).__name__}")


def split(dataset, spec: SplitSpec):
    """Seeded permutation, then contiguous train/val/test slices.

    Sizes follow floor-then-remainder-to-test rounding; an empty slice is an
    error. The three parts partition the input exactly.
    """
    n = len(dataset)
    if n < 3:
        raise DataError(f"need at least 3 rows to split, got {n}")
    perm = philox_stream(spec.seed, _STREAM_SPLIT).permutation(n)
    n_train = int(n * spec.train_frac)
    n_val = int(n * spec.val_frac)
    n_test = n - n_train - n_val
    sizes = {"train": n_train, "val": n_val, "test": n_test}
    for name, size in sizes.items():
        if size <= 0:
            raise DataError(f"{name} split is empty under fractions "
                            f"({spec.train_frac}, {spec.val_frac}, {spec.test_frac}) with {n} rows")
    return (
        _take(dataset, perm[:n_train]),
        _take(dataset, perm[n_train : n_train + n_val]),
        _take(dataset, perm[n_train + n_val :]),
    )


def _exact_targets(dataset) -> np.ndarray:
    if isinstance(dataset, LabeledDataset):
        return dataset.ys
    if isinstance(dataset, IntervalDataset):
        if dataset.true_ys is None:
            raise DataError("rescaling needs exact targets on the training split")
        return dataset.true_ys
    raise TypeError(f"cannot rescale {type(dataset).__name__}")


def _apply_scale(dataset, scale: float):
    if isinstance(dataset, LabeledDataset):
        return LabeledDataset(dataset.xs, dataset.ys * scale)
    ys = None if dataset.true_ys is None else dataset.true_ys * scale
    return IntervalDataset.from_arrays(
        dataset.features, dataset.lowers * scale, dataset.uppers * scale, ys
    )


def rescale_targets(train, *others, target_std: float = 100.0):
    """Multiply targets (and interval bounds) of every split by a common
    factor so the training split's target standard deviation becomes
    target_std. The factor comes from the training split alone.

    Returns ([rescaled train, rescaled others...], RescaleParams).
    """
    if target_std <= 0.0:
        raise DataError(f"target_std must be > 0, got {target_std}")
    std = float(np.std(_exact_targets(train)))
    if std == 0.0:
        raise DataError("training targets have zero standard deviation; cannot rescale")
    scale = target_std / std
    rescaled = [_apply_scale(d, scale) for d in (train, *others)]
    return rescaled, RescaleParams(scale=scale)
