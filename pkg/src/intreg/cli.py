"""Command-line harness.

Subcommands:

  gen        labeled CSV -> interval CSV via the (q, p) generator
  train      train one model on an interval CSV; writes checkpoint + trace
  eval       MAE of a checkpoint on a labeled/interval CSV with targets
  denoise    reduced intervals + buffers for every row of an interval CSV
  lipschitz  data-driven Lipschitz-constant estimate of a labeled CSV
  bench      full experiment sweep from a JSON config
  plot       aggregate CSV -> SVG chart

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 one or more
experiment cells failed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    load_interval_csv,
    load_labeled_csv,
    write_interval_csv,
)
from .denoise import DenoiseQuery, buffer_radius, reduced_interval
from .experiment import (
    AGGREGATE_HEADER,
    ConfigError,
    load_config,
    run_experiment,
)
from .intervalgen import (
    BoundaryFavoring,
    IntervalGenConfig,
    MidCentered,
    UniformRange,
    generate_intervals,
)
from .model import (
    MlpConfig,
    estimate_lipschitz_constant,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .objectives import OBJECTIVE_KINDS, ObjectiveSpec, TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CELLS_FAILED = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the harness contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _location_from_args(args):
    if args.location == "uniform":
        return UniformRange(args.p_min, args.p_max)
    if args.location == "mid":
        return MidCentered(args.c)
    if args.location == "boundary":
        return BoundaryFavoring(args.c)
    raise ValueError(f"unknown location law {args.location!r}")


def _cmd_gen(args) -> int:
    data = load_labeled_csv(args.input)
    cfg = IntervalGenConfig(
        q_min=args.q_min,
        q_max=args.q_max,
        location=_location_from_args(args),
        pad_scale=args.pad_scale,
        seed=args.seed,
    )
    ds = generate_intervals(data.xs, data.ys, cfg)
    write_interval_csv(args.output, ds)
    print(f"wrote {len(ds)} interval rows to {args.output}")
    return EXIT_OK


def _cmd_train(args) -> int:
    ds = load_interval_csv(args.data)
    spec = ObjectiveSpec(
        kind=args.objective,
        loss_exponent=args.exponent,
        reg_lambda=args.reg_lambda,
        adversary_lr=args.adversary_lr,
        teachers=args.teachers,
    )
    hidden = tuple(int(h) for h in args.hidden.split(",")) if args.hidden else (10, 20, 30)
    model_cfg = MlpConfig.for_input(
        ds.feature_dim,
        hidden=hidden,
        lipschitz=args.lipschitz,
        power_iterations=args.power_iterations,
        init_seed=args.seed,
    )
    tc = TrainConfig(
        model=model_cfg,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
    )
    has_y = ds.true_ys is not None
    model = train(spec, tc, ds, record_train_mae=has_y)
    save_checkpoint(args.checkpoint, model.params, model.model_config)
    if args.trace:
        with open(args.trace, "w", newline="") as f:
            f.write("epoch,train_objective_loss" + (",train_mae" if has_y else "") + "\n")
            for e in range(tc.epochs):
                line = f"{e},{float(model.trace[e])!r}"
                if has_y:
                    line += f",{float(model.mae_trace[e])!r}"
                f.write(line + "\n")
    print(f"final training loss {model.trace[-1]:.6g}; checkpoint at {args.checkpoint}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    params, cfg = load_checkpoint(args.checkpoint)
    try:
        ds = load_interval_csv(args.data)
        if ds.true_ys is None:
            raise DataError(f"{args.data}: no target column to evaluate against")
        xs, ys = ds.features, ds.true_ys
    except DataError:
        data = load_labeled_csv(args.data)
        xs, ys = data.xs, data.ys
    mae = float(np.mean(np.abs(predict(params, cfg, xs) - ys)))
    print(f"mae {mae!r}")
    return EXIT_OK


def _cmd_denoise(args) -> int:
    ds = load_interval_csv(args.data)
    with open(args.output, "w", newline="") as f:
        f.write("query_index,base_lower,base_upper,r,s,empty_flag\n")
        for i in range(len(ds)):
            red = reduced_interval(ds, args.m, ds.features[i], norm=args.norm)
            if red.empty:
                f.write(f"{i},{red.base_lower!r},{red.base_upper!r},,,1\n")
                continue
            q = DenoiseQuery(ds.features[i], args.m, args.eta, args.exponent)
            r, s = buffer_radius(ds, q, norm=args.norm)
            f.write(f"{i},{red.base_lower!r},{red.base_upper!r},{r!r},{s!r},0\n")
    print(f"wrote per-query reduced intervals to {args.output}")
    return EXIT_OK


def _cmd_lipschitz(args) -> int:
    data = load_labeled_csv(args.data)
    est = estimate_lipschitz_constant(
        data.xs, data.ys, percentile=args.percentile, max_pairs=args.max_pairs
    )
    print(f"estimated lipschitz constant {est!r}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    rows, aggregates, failures = run_experiment(cfg)
    out = Path(cfg.output_dir)
    print(f"{len(rows)} result rows -> {out / 'results.csv'}")
    for objective, setting, m, split_name, mean_mae, ste, k in aggregates:
        if split_name == "test":
            m_s = "" if m is None else f" m={m:g}"
            print(f"  {objective}{m_s}: test mae {mean_mae:.4f} +/- {ste:.4f} ({k} seeds)")
    if failures:
        print(f"{failures} cell(s) failed; see error column in results.csv", file=sys.stderr)
        return EXIT_CELLS_FAILED
    return EXIT_OK


def _read_aggregate(path):
    rows = []
    with open(path, newline="") as f:
        first = f.readline().rstrip("\n")
        if first != AGGREGATE_HEADER:
            raise DataError(f"{path}: not an aggregate CSV (bad header comment)")
        for rec in csv.DictReader(f):
            rows.append(
                {
                    "objective": rec["objective"],
                    "m": float(rec["m"]) if rec["m"] else None,
                    "split": rec["split"],
                    "mean_mae": float(rec["mean_mae"]),
                    "ste": float(rec["ste"]),
                }
            )
    if not rows:
        raise DataError(f"{path}: empty aggregate")
    return rows


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in _read_aggregate(args.aggregate) if r["split"] == args.split]
    if not rows:
        raise DataError(f"no rows for split {args.split!r} in {args.aggregate}")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    has_m = any(r["m"] is not None for r in rows)
    if has_m:
        objectives = sorted({r["objective"] for r in rows})
        for obj in objectives:
            pts = sorted(
                [r for r in rows if r["objective"] == obj and r["m"] is not None],
                key=lambda r: r["m"],
            )
            ax.errorbar(
                [r["m"] for r in pts],
                [r["mean_mae"] for r in pts],
                yerr=[r["ste"] for r in pts],
                marker="o",
                capsize=3,
                label=obj,
            )
        ax.set_xscale("log")
        ax.set_xlabel("lipschitz scale m")
    else:
        objectives = [r["objective"] for r in rows]
        ax.bar(
            range(len(rows)),
            [r["mean_mae"] for r in rows],
            yerr=[r["ste"] for r in rows],
            capsize=3,
        )
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(objectives, rotation=30, ha="right")
    ax.set_ylabel(f"{args.split} mae")
    if has_m:
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, format="svg")
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="intreg", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="labeled CSV -> interval CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--q-min", type=float, default=0.0)
    p.add_argument("--q-max", type=float, required=True)
    p.add_argument("--location", choices=["uniform", "mid", "boundary"], default="uniform")
    p.add_argument("--p-min", type=float, default=0.0)
    p.add_argument("--p-max", type=float, default=1.0)
    p.add_argument("--c", type=float, default=0.0, help="half-width for mid/boundary laws")
    p.add_argument("--pad-scale", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train one model on an interval CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--objective", choices=list(OBJECTIVE_KINDS), default="projection")
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", default="10,20,30", help="comma-separated hidden sizes")
    p.add_argument("--lipschitz", type=float, default=None)
    p.add_argument("--power-iterations", type=int, default=5)
    p.add_argument("--teachers", type=int, default=5)
    p.add_argument("--reg-lambda", type=float, default=1.0)
    p.add_argument("--adversary-lr", type=float, default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trace", default=None, help="per-epoch loss trace CSV")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="MAE of a checkpoint on a CSV with targets")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("denoise", help="reduced intervals for every dataset row")
    p.add_argument("--data", required=True)
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--norm", choices=["l2", "linf"], default="l2")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("lipschitz", help="estimate the dataset Lipschitz constant")
    p.add_argument("--data", required=True)
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--max-pairs", type=int, default=1_000_000)
    p.set_defaults(func=_cmd_lipschitz)

    p = sub.add_parser("bench", help="experiment sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("plot", help="aggregate CSV -> SVG chart")
    p.add_argument("--aggregate", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
