"""``ols-attention`` command line: equivalence sweeps, training, shift sweeps.

Exit codes: 0 success, 1 numerical or equivalence failure, 2 usage error.

Output files
------------
``equiv`` CSV columns: trial, n, k, design, noise_var, max_abs_diff,
rel_frobenius_diff, whitening_residual.

``train`` CSV columns: epoch, mse, rel_dist_to_ols, l_value. The JSON form
holds the same records plus ``l_star``, ``seed`` and a ``config`` echo.

``shift`` CSV columns: shift_kind, shift_param, relative_error,
distortion_frobenius_dist_from_identity. ``scale`` multiplies the context
entries by the parameter, so the context covariance is ``param**2`` times the
training covariance. ``rotate`` turns the first two coordinates by the
parameter in radians; ``anisotropic`` stretches the first coordinate only.
Training designs are whitened to identity covariance unless ``--design`` says
otherwise.

Every CSV starts with a ``# ols-attention v1, command=..., seed=...`` line.
Defaults for ``--lr`` and ``--x-dist`` are documented choices, not derived values.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys

import numpy as np

from .attention import equivalence_report
from .errors import NumericalError, RankDeficient, TrainingDiverged
from .matrix import empirical_covariance, whitening_factor
from .reporting import (
    EQUIV_COLUMNS,
    SCHEMA,
    SHIFT_COLUMNS,
    TRACE_COLUMNS,
    render_csv,
    render_json,
    trace_payload,
    write_text,
)
from .rng import Rng
from .shift import SHIFT_KINDS, ShiftSpec, shift_experiment
from .trainer import TrainConfig, train

EQUIV_TOL = 1e-8
CROSSING = 1e-2
MAX_REDRAWS = 20

DEFAULT_GRID = {"scale": "0.5:2.0:0.25", "rotate": "0:3.14159:0.392699", "anisotropic": "0.5:2.0:0.25"}
COMMAND_DEFAULTS = {
    "equiv": {"n": 200, "k": 8, "noise_var": 1e-4, "design": "mixed"},
    "train": {"n": 500, "k": 1, "noise_var": 1e-4, "design": "uniform"},
    "shift": {"n": 500, "k": 2, "noise_var": 0.0, "design": "isotropic"},
}


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise UsageError(f"--grid must look like lo:hi:step, got {text!r}") from None
    if not step > 0 or hi < lo:
        raise UsageError(f"--grid needs step > 0 and hi >= lo, got {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def make_design(rng: Rng, n: int, k: int, kind: str) -> np.ndarray:
    if kind == "gaussian":
        return rng.normal((n, k))
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, (n, k))
    if kind == "isotropic":
        x = rng.normal((n, k))
        return x @ whitening_factor(empirical_covariance(x)).whitening
    raise ValueError(f"unknown design kind {kind!r}")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="training samples (equiv: upper bound)")
    common.add_argument("--k", type=int, help="feature dimension (equiv: upper bound)")
    common.add_argument("--m", type=int, help="context samples for shift (default: n)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=100)
    common.add_argument("--epochs", type=int, default=5000)
    common.add_argument("--lr", type=float, default=0.01, help="Adam step size")
    common.add_argument("--noise-var", type=float, help="Gaussian noise variance on responses")
    common.add_argument("--slope", type=float, default=2.0)
    common.add_argument("--l0", type=float, default=0.5)
    common.add_argument("--x-dist", choices=("uniform", "gaussian"), default="uniform",
                        help="train input distribution (default: uniform on [-1, 1])")
    common.add_argument("--record-every", type=int, default=1, help="keep every Nth training epoch")
    common.add_argument("--design", choices=("gaussian", "uniform", "isotropic", "mixed"),
                        help="design matrix family for equiv/shift")
    common.add_argument("--shift-kind", choices=SHIFT_KINDS, default="scale")
    common.add_argument("--shift-param", type=float, help="single shift parameter instead of a grid")
    common.add_argument("--grid", help="shift parameter grid lo:hi:step (inclusive)")
    common.add_argument("--out", help="output path (default: <command>.<format>)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--debug-scores", action="store_true",
                        help="also form the n x n score matrix and cross-check it")

    parser = argparse.ArgumentParser(prog="ols-attention",
                                     description="Least squares as a single-layer linear transformer.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("equiv", parents=[common], help="check the OLS configuration on random instances")
    sub.add_parser("train", parents=[common], help="train the scalar-L model with Adam")
    sub.add_parser("shift", parents=[common], help="sweep a context distribution shift")
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    for key, value in COMMAND_DEFAULTS[args.command].items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.n < 1 or args.k < 1:
        raise UsageError("--n and --k must be positive")
    if args.command == "equiv" and args.n < args.k:
        raise UsageError(f"--n ({args.n}) must be at least --k ({args.k})")
    if args.command == "train" and args.n < 2:
        raise UsageError("train needs --n >= 2")
    if args.trials < 1 or args.epochs < 1 or args.record_every < 1:
        raise UsageError("--trials, --epochs and --record-every must be positive")
    if args.noise_var < 0:
        raise UsageError("--noise-var must be non-negative")
    if args.m is None:
        args.m = args.n
    if args.command == "shift":
        if args.design == "mixed":
            raise UsageError("--design mixed is only meaningful for equiv")
        if args.m < args.k or args.n < args.k:
            raise UsageError("shift needs --n and --m at least --k")
        args.grid_values = [args.shift_param] if args.shift_param is not None else \
            parse_grid(args.grid or DEFAULT_GRID[args.shift_kind])
        if args.shift_kind in ("scale", "anisotropic") and min(args.grid_values) <= 0:
            raise UsageError(f"{args.shift_kind} parameters must be positive")
    if args.out is None:
        args.out = f"{args.command}.{args.format}"
    return args


def _config_echo(args: argparse.Namespace, keys: tuple[str, ...]) -> dict:
    return {key: getattr(args, key) for key in keys}


def cmd_equiv(args: argparse.Namespace) -> int:
    root = Rng(args.seed)
    rows = []
    for trial in range(args.trials):
        rng = root.child(trial)
        design = args.design if args.design != "mixed" else ("gaussian", "uniform")[trial % 2]
        for _ in range(MAX_REDRAWS):
            k = rng.integers(1, args.k)
            n = rng.integers(min(k + 1, args.n), args.n)
            x = make_design(rng, n, k, design)
            y = x @ rng.normal((k, 1)) + rng.normal((n, 1), scale=math.sqrt(args.noise_var))
            try:
                rep = equivalence_report(x, y, debug_scores=args.debug_scores)
                break
            except RankDeficient:
                continue
        else:
            print(f"trial {trial}: no full-rank instance in {MAX_REDRAWS} draws", file=sys.stderr)
            return 1
        rows.append((trial, n, k, design, args.noise_var, rep.max_abs_diff, rep.rel_frobenius_diff,
                     rep.whitening_residual))

    worst = max(row[6] for row in rows)
    config = _config_echo(args, ("n", "k", "seed", "trials", "noise_var", "design", "debug_scores"))
    if args.format == "csv":
        text = render_csv("equiv", args.seed, EQUIV_COLUMNS, rows)
    else:
        text = render_json({"schema": SCHEMA, "command": "equiv", "seed": args.seed, "config": config,
                            "max_rel_frobenius_diff": worst,
                            "trials": [dict(zip(EQUIV_COLUMNS, row)) for row in rows]})
    write_text(args.out, text)
    print(f"equiv: {args.trials} trials, max relative difference {worst:.3e} (tolerance {EQUIV_TOL:.0e})")
    return 0 if worst <= EQUIV_TOL else 1


def cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig(n=args.n, slope=args.slope, noise_var=args.noise_var, l0=args.l0,
                         epochs=args.epochs, lr=args.lr, seed=args.seed, x_dist=args.x_dist,
                         record_every=args.record_every)
    try:
        trace = train(config)
    except TrainingDiverged as exc:
        print(f"train: {exc}", file=sys.stderr)
        return 1
    rows = [tuple(r) for r in trace.records]
    if args.format == "csv":
        extra = {"l_star": trace.l_star, **{k: v for k, v in dataclasses.asdict(config).items() if k != "seed"}}
        text = render_csv("train", args.seed, TRACE_COLUMNS, rows, extra)
    else:
        text = render_json(trace_payload(trace))
    write_text(args.out, text)
    final = trace.final
    structural = trace.first_crossing(trace.l_error(), CROSSING)
    functional = trace.first_crossing(trace.column("rel_dist_to_ols"), CROSSING)
    print(f"train: final mse {final.mse:.6e}")
    print(f"train: final |L-L*|/L* {abs(final.l_value - trace.l_star) / trace.l_star:.3e} (L* = {trace.l_star:.6f})")
    print(f"train: first epoch |L-L*|/L* < {CROSSING:g}: {structural}")
    print(f"train: first epoch rel_dist_to_ols < {CROSSING:g}: {functional}")
    return 0


def cmd_shift(args: argparse.Namespace) -> int:
    rng = Rng(args.seed)
    x = make_design(rng, args.n, args.k, args.design)
    beta = rng.normal((args.k, 1))
    y = x @ beta
    rows, reports = [], []
    for i, param in enumerate(args.grid_values):
        spec = ShiftSpec(args.shift_kind, param)
        report = shift_experiment(x, y, spec, seed=rng.child(i).seed, m=args.m, beta_true=beta,
                                  noise_var=args.noise_var)
        rows.append((args.shift_kind, param, report.relative_error, report.distortion_distance()))
        reports.append(report)
    config = _config_echo(args, ("n", "k", "m", "seed", "noise_var", "design", "shift_kind", "grid_values"))
    if args.format == "csv":
        text = render_csv("shift", args.seed, SHIFT_COLUMNS, rows)
    else:
        text = render_json({"schema": SCHEMA, "command": "shift", "seed": args.seed, "config": config,
                            "beta_true": beta[:, 0].tolist(),
                            "rows": [dict(zip(SHIFT_COLUMNS, row)) | {"report": rep.to_dict()}
                                     for row, rep in zip(rows, reports)]})
    write_text(args.out, text)
    worst = max(rows, key=lambda r: r[2])
    print(f"shift: {len(rows)} {args.shift_kind} points, largest relative error {worst[2]:.3e} at {worst[1]!r}")
    return 0


COMMANDS = {"equiv": cmd_equiv, "train": cmd_train, "shift": cmd_shift}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = _resolve(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ols-attention {args.command}: error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"ols-attention {args.command}: numerical error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
