"""Experiment orchestration: objective x seed x Lipschitz-scale sweeps over
one dataset, with deterministic CSV outputs.

Each cell regenerates intervals on the train/val splits from the cell's
seed, trains one model, and reports MAE against the exact targets on all
three splits (the test split never sees intervals). Failures are recorded
in their rows without aborting sibling cells. Reruns of the same config
reproduce every number, also under a worker pool (rows are sorted before
writing); the wall-clock runtime_seconds column of results.csv is the one
field that varies between reruns, so aggregate.csv is byte-identical.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import Interval, IntervalDataset
from .data import LabeledDataset, SplitSpec, load_labeled_csv, rescale_targets, split
from .intervalgen import (
    BoundaryFavoring,
    IntervalGenConfig,
    MidCentered,
    UniformRange,
    generate_intervals,
)
from .model import MlpConfig
from .objectives import ObjectiveSpec, TrainConfig, TrainedModel, train

__all__ = [
    "ConfigError",
    "TrainSettings",
    "ExperimentConfig",
    "ResultsRow",
    "evaluate_mae",
    "ensemble_reduced_intervals",
    "run_experiment",
    "write_results_csv",
    "write_aggregate_csv",
]

RESULTS_HEADER = "# intreg-results v1"
AGGREGATE_HEADER = "# intreg-aggregate v1"

# Interval regeneration for the validation split uses a shifted key so its
# draws are independent of the training split's.
_VAL_SEED_OFFSET = 2 ** 33


class ConfigError(ValueError):
    """A problem with an experiment configuration."""


@dataclass(frozen=True)
class TrainSettings:
    """Trainer knobs shared by every cell; the input dimension (and so the
    full layer stack) is only known once the dataset is loaded."""

    hidden: tuple[int, ...] = (10, 20, 30)
    epochs: int = 1000
    batch_size: int = 512
    lr: float = 0.001
    power_iterations: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    split: SplitSpec
    intervals: IntervalGenConfig
    objectives: tuple[ObjectiveSpec, ...]
    train: TrainSettings
    seeds: tuple[int, ...]
    output_dir: str
    lipschitz_grid: tuple[float, ...] | None = None
    lr_grid: tuple[float, ...] | None = None
    select_by_validation: bool = False
    rescale_target_std: float | None = None
    dataset_name: str | None = None
    workers: int = 1

    def __post_init__(self):
        if len(self.objectives) == 0:
            raise ConfigError("need at least one objective")
        if len(self.seeds) == 0:
            raise ConfigError("need at least one seed")
        if self.lipschitz_grid is not None and len(self.lipschitz_grid) == 0:
            raise ConfigError("lipschitz_grid, when present, must be nonempty")
        if self.lr_grid is not None and len(self.lr_grid) == 0:
            raise ConfigError("lr_grid, when present, must be nonempty")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def name(self) -> str:
        return self.dataset_name or Path(self.dataset).stem


@dataclass
class ResultsRow:
    dataset: str
    objective: str
    setting: str
    m: float | None
    seed: int
    split: str
    mae: float
    runtime_seconds: float
    error: str = ""


def evaluate_mae(model: TrainedModel, dataset) -> float:
    """Mean absolute error of the model against exact targets."""
    if isinstance(dataset, LabeledDataset):
        xs, ys = dataset.xs, dataset.ys
    elif isinstance(dataset, IntervalDataset):
        if dataset.true_ys is None:
            raise ValueError("MAE needs true_y on every sample")
        xs, ys = dataset.features, dataset.true_ys
    else:
        raise TypeError(f"cannot evaluate on {type(dataset).__name__}")
    return float(np.mean(np.abs(model.predict(xs) - ys)))


def ensemble_reduced_intervals(models, xs) -> tuple[list[Interval], float]:
    """Per-row interval spanned by an ensemble's predictions, plus the mean
    width: [min_j f_j(x), max_j f_j(x)]. An empirical stand-in for the
    reduced interval of hypotheses that fit the training intervals."""
    if len(models) < 2:
        raise ValueError("need at least 2 models for an ensemble interval")
    xs = np.asarray(xs, dtype=float)
    preds = np.stack([m.predict(xs) for m in models])
    lo = preds.min(axis=0)
    hi = preds.max(axis=0)
    intervals = [Interval(float(a), float(b)) for a, b in zip(lo, hi)]
    return intervals, float(np.mean(hi - lo))


# --- config parsing -------------------------------------------------------

def _check_keys(obj: dict, allowed, where: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")


def _location_from_json(obj) -> UniformRange | MidCentered | BoundaryFavoring:
    if not isinstance(obj, dict) or "law" not in obj:
        raise ConfigError("intervals.location must be an object with a 'law' key")
    law = obj["law"]
    if law == "uniform":
        _check_keys(obj, {"law", "p_min", "p_max"}, "intervals.location")
        return UniformRange(obj.get("p_min", 0.0), obj.get("p_max", 1.0))
    if law == "mid":
        _check_keys(obj, {"law", "c"}, "intervals.location")
        return MidCentered(obj["c"])
    if law == "boundary":
        _check_keys(obj, {"law", "c"}, "intervals.location")
        return BoundaryFavoring(obj["c"])
    raise ConfigError(f"unknown location law {law!r} (use 'uniform', 'mid', or 'boundary')")


def _objective_from_json(obj) -> ObjectiveSpec:
    if isinstance(obj, str):
        obj = {"kind": obj}
    _check_keys(
        obj, {"kind", "loss_exponent", "reg_lambda", "adversary_lr", "teachers"}, "objective"
    )
    try:
        return ObjectiveSpec(**obj)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad objective {obj}: {e}") from e


def config_from_json(obj: dict, base_dir: Path | None = None) -> ExperimentConfig:
    allowed = {
        "dataset", "dataset_name", "split", "intervals", "objectives", "train",
        "seeds", "output_dir", "lipschitz_grid", "lr_grid", "select_by_validation",
        "rescale_target_std", "workers",
    }
    _check_keys(obj, allowed, "config")
    for key in ("dataset", "split", "intervals", "objectives", "train", "seeds", "output_dir"):
        if key not in obj:
            raise ConfigError(f"config: missing required key {key!r}")

    sp = dict(obj["split"])
    _check_keys(sp, {"train_frac", "val_frac", "test_frac", "seed"}, "split")
    iv = dict(obj["intervals"])
    _check_keys(iv, {"q_min", "q_max", "location", "pad_scale", "seed"}, "intervals")
    iv["location"] = _location_from_json(iv.get("location", {"law": "uniform"}))
    tr = dict(obj["train"])
    _check_keys(tr, {"hidden", "epochs", "batch_size", "lr", "power_iterations"}, "train")
    if "hidden" in tr:
        tr["hidden"] = tuple(tr["hidden"])

    dataset = obj["dataset"]
    output_dir = obj["output_dir"]
    if base_dir is not None:
        dataset = str((base_dir / dataset).resolve()) if not Path(dataset).is_absolute() else dataset
        output_dir = (
            str((base_dir / output_dir).resolve()) if not Path(output_dir).is_absolute() else output_dir
        )
    try:
        return ExperimentConfig(
            dataset=dataset,
            dataset_name=obj.get("dataset_name"),
            split=SplitSpec(**sp),
            intervals=IntervalGenConfig(**iv),
            objectives=tuple(_objective_from_json(o) for o in obj["objectives"]),
            train=TrainSettings(**tr),
            seeds=tuple(int(s) for s in obj["seeds"]),
            output_dir=output_dir,
            lipschitz_grid=None if obj.get("lipschitz_grid") is None else tuple(obj["lipschitz_grid"]),
            lr_grid=None if obj.get("lr_grid") is None else tuple(obj["lr_grid"]),
            select_by_validation=bool(obj.get("select_by_validation", False)),
            rescale_target_std=obj.get("rescale_target_std"),
            workers=int(obj.get("workers", 1)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return config_from_json(obj, base_dir=Path(path).resolve().parent)


# --- the sweep ------------------------------------------------------------

def _setting_label(cfg: ExperimentConfig) -> str:
    iv = cfg.intervals
    loc = iv.location
    if isinstance(loc, UniformRange):
        loc_s = f"p=U[{loc.p_min:g},{loc.p_max:g}]"
    elif isinstance(loc, MidCentered):
        loc_s = f"p=mid(c={loc.c:g})"
    else:
        loc_s = f"p=boundary(c={loc.c:g})"
    pad = f",pad={iv.pad_scale:g}" if iv.pad_scale > 0 else ""
    return f"q=[{iv.q_min:g},{iv.q_max:g}],{loc_s}{pad}"


def _run_cell(args):
    """One (objective, m, lr, seed) cell. Top level so worker pools can
    pickle it; returns the three split rows."""
    (cfg, obj, m, lr, seed, train_data, val_data, test_data, setting) = args
    rows = []
    t0 = time.perf_counter()
    try:
        gen_train = replace(cfg.intervals, seed=seed)
        gen_val = replace(cfg.intervals, seed=seed + _VAL_SEED_OFFSET)
        train_ds = generate_intervals(train_data.xs, train_data.ys, gen_train)
        val_ds = generate_intervals(val_data.xs, val_data.ys, gen_val)
        model_cfg = MlpConfig.for_input(
            train_data.xs.shape[1],
            hidden=cfg.train.hidden,
            lipschitz=m,
            power_iterations=cfg.train.power_iterations,
            init_seed=seed,
        )
        tc = TrainConfig(
            model=model_cfg,
            epochs=cfg.train.epochs,
            batch_size=cfg.train.batch_size,
            lr=lr,
            seed=seed,
        )
        model = train(obj, tc, train_ds)
        runtime = time.perf_counter() - t0
        for split_name, part in (("train", train_ds), ("val", val_ds), ("test", test_data)):
            rows.append(
                ResultsRow(
                    cfg.name, _objective_label(obj, lr, cfg), setting, m, seed,
                    split_name, evaluate_mae(model, part), runtime,
                )
            )
    except Exception as e:  # cell failures must not kill sibling cells
        runtime = time.perf_counter() - t0
        for split_name in ("train", "val", "test"):
            rows.append(
                ResultsRow(
                    cfg.name, _objective_label(obj, lr, cfg), setting, m, seed,
                    split_name, math.nan, runtime, error=str(e),
                )
            )
    return rows


def _objective_label(obj: ObjectiveSpec, lr: float, cfg: ExperimentConfig) -> str:
    label = obj.kind
    if obj.loss_exponent != 1.0:
        label += f"(p={obj.loss_exponent:g})"
    if cfg.lr_grid is not None:
        label += f"@lr={lr:g}"
    return label


_SPLIT_ORDER = {"train": 0, "val": 1, "test": 2}


def run_experiment(cfg: ExperimentConfig):
    """Run every (objective x m x lr x seed) cell and aggregate.

    Returns (rows, aggregates, failures) where aggregates is a list of
    (objective, setting, m, split, mean_mae, ste, n_seeds) and failures
    counts failed cells. Also writes results.csv and aggregate.csv (and
    selection.csv under validation-based selection) into cfg.output_dir.
    """
    labeled = load_labeled_csv(cfg.dataset)
    train_data, val_data, test_data = split(labeled, cfg.split)
    if cfg.rescale_target_std is not None:
        (train_data, val_data, test_data), _ = rescale_targets(
            train_data, val_data, test_data, target_std=cfg.rescale_target_std
        )

    setting = _setting_label(cfg)
    ms = list(cfg.lipschitz_grid) if cfg.lipschitz_grid is not None else [None]
    lrs = list(cfg.lr_grid) if cfg.lr_grid is not None else [cfg.train.lr]
    cells = [
        (cfg, obj, m, lr, seed, train_data, val_data, test_data, setting)
        for obj in cfg.objectives
        for m in ms
        for lr in lrs
        for seed in cfg.seeds
    ]

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            row_groups = list(pool.map(_run_cell, cells))
    else:
        row_groups = [_run_cell(c) for c in cells]
    rows = [row for group in row_groups for row in group]
    rows.sort(
        key=lambda r: (
            r.objective,
            math.inf if r.m is None else r.m,
            r.seed,
            _SPLIT_ORDER[r.split],
        )
    )
    failures = sum(1 for r in rows if r.error) // 3

    aggregates = _aggregate(rows)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(out / "results.csv", rows)
    write_aggregate_csv(out / "aggregate.csv", aggregates)
    if cfg.select_by_validation:
        _write_selection_csv(out / "selection.csv", aggregates)
    return rows, aggregates, failures


def _aggregate(rows):
    """Mean and standard error over seeds per (objective, setting, m, split)."""
    groups: dict = {}
    for r in rows:
        if r.error:
            continue
        groups.setdefault((r.objective, r.setting, r.m, r.split), []).append(r.mae)
    out = []
    for (objective, setting, m, split_name), maes in sorted(
        groups.items(),
        key=lambda kv: (kv[0][0], math.inf if kv[0][2] is None else kv[0][2], _SPLIT_ORDER[kv[0][3]]),
    ):
        maes = np.array(maes)
        k = maes.size
        ste = float(np.std(maes, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        out.append((objective, setting, m, split_name, float(np.mean(maes)), ste, k))
    return out


def _write_selection_csv(path, aggregates):
    """Validation-MAE winner per base objective kind across the m/lr grid."""
    best: dict = {}
    for objective, setting, m, split_name, mean_mae, ste, k in aggregates:
        if split_name != "val":
            continue
        base = objective.split("@")[0]
        if base not in best or mean_mae < best[base][0]:
            best[base] = (mean_mae, objective, setting, m)
    test_by_key = {
        (objective, m): (mean_mae, ste)
        for objective, setting, m, split_name, mean_mae, ste, k in aggregates
        if split_name == "test"
    }
    with open(path, "w", newline="") as f:
        f.write("# intreg-selection v1\n")
        f.write("objective,selected,m,val_mae,test_mae,test_ste\n")
        for base in sorted(best):
            val_mae, objective, setting, m = best[base]
            test_mae, test_ste = test_by_key.get((objective, m), (math.nan, math.nan))
            f.write(
                f"{base},{objective},{_fmt(m)},{_fmt(val_mae)},{_fmt(test_mae)},{_fmt(test_ste)}\n"
            )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_results_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(RESULTS_HEADER + "\n")
        f.write("dataset,objective,setting,m,seed,split,mae,runtime_seconds,error\n")
        for r in rows:
            mae = "nan" if math.isnan(r.mae) else repr(r.mae)
            err = r.error.replace("\n", " ").replace(",", ";")
            f.write(
                f"{r.dataset},{r.objective},\"{r.setting}\",{_fmt(r.m)},{r.seed},"
                f"{r.split},{mae},{r.runtime_seconds:.3f},{err}\n"
            )


def write_aggregate_csv(path, aggregates) -> None:
    with open(path, "w", newline="") as f:
        f.write(AGGREGATE_HEADER + "\n")
        f.write("objective,setting,m,split,mean_mae,ste,seeds\n")
        for objective, setting, m, split_name, mean_mae, ste, k in aggregates:
            f.write(
                f"{objective},\"{setting}\",{_fmt(m)},{split_name},"
                f"{repr(mean_mae)},{repr(ste)},{k}\n"
            )
