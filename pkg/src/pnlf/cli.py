"""Command-line entry point: ``pnlf <command> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 when the command
itself fails (bad input file, divergence under ``--strict``, ...).
Results are printed to stdout as JSON lines; the first line of every run
records the command, the resolved configuration (seed included) and the
package version so the run can be replayed.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from ._accel import BACKENDS, resolve_backend
from .config import CONFIG_KEYS, RunConfig, build_config, parse_ratios, read_config_file
from .errors import PNLFError
from .ingest import IngestSpec, ingest_csv, write_meter_map
from .io import (
    Model,
    load_model,
    read_queries_csv,
    read_tensor_csv,
    save_model,
    write_cells_csv,
    write_tensor_csv,
)
from .sparse_tensor import DEFAULT_TARGET_MAX, scale_linear, split, synth_low_rank
from .trainer import ablate, evaluate, impute, repeat, sweep, train_split

COMMANDS = ("ingest", "train", "evaluate", "impute", "ablate", "sweep", "synth")

SYNOPSIS = """\
usage: pnlf <command> [options]

commands:
  synth     generate a synthetic low-rank tensor CSV
  ingest    convert a meter reading CSV into a tensor CSV
  train     fit a model and save it
  evaluate  score a saved model on a split of a tensor
  impute    predict cells with a saved model
  ablate    compare PID training against plain SGD
  sweep     grid over one or two hyperparameters

run 'pnlf <command> --help' for options
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _add_hyper_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training configuration (overrides --config)")
    g.add_argument("--config", type=Path, help="flat 'key = value' file; keys: " + ", ".join(CONFIG_KEYS))
    g.add_argument("--eta", type=float, help="learning rate / proportional gain")
    g.add_argument("--lambda", dest="lambda_", type=float, help="regularization coefficient")
    g.add_argument("--c-i", type=float, help="integral gain")
    g.add_argument("--c-d", type=float, help="derivative gain")
    g.add_argument("--alpha", type=float, help="integral decay")
    g.add_argument("--rank", type=int, help="latent dimension R")
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--tol", type=float, help="convergence threshold on the validation metric")
    g.add_argument("--reg-mode", choices=("analytic", "paper"))
    g.add_argument("--stop-metric", choices=("rmse", "mae"))
    g.add_argument("--first-visit-derivative", choices=("zero", "literal"))
    g.add_argument("--ratios", type=parse_ratios, help="train,validation,test fractions")
    g.add_argument("--seed", type=int)
    g.add_argument("--repeats", type=int)
    g.add_argument("--backend", choices=BACKENDS, help="kernel backend (default: $PNLF_BACKEND or numba)")
    g.add_argument(
        "--scale",
        type=float,
        default=DEFAULT_TARGET_MAX,
        metavar="TARGET_MAX",
        help="min-max scale values onto [0, TARGET_MAX] before training (default 10)",
    )
    g.add_argument("--no-scale", action="store_true", help="train on raw values")
    g.add_argument("--strict", action="store_true", help="fail with exit 2 if training diverges")


def _resolve_config(args) -> RunConfig:
    values: dict[str, object] = {}
    if getattr(args, "config", None):
        try:
            values.update(read_config_file(args.config))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    flags = {
        "eta": args.eta,
        "lambda": args.lambda_,
        "c_i": args.c_i,
        "c_d": args.c_d,
        "alpha": args.alpha,
        "rank": args.rank,
        "max_epochs": args.max_epochs,
        "tol": args.tol,
        "reg_mode": args.reg_mode,
        "stop_metric": args.stop_metric,
        "first_visit_derivative": args.first_visit_derivative,
        "ratios": args.ratios,
        "seed": args.seed,
        "repeats": args.repeats,
    }
    if getattr(args, "clamp", False):
        flags["clamp"] = True
    if not args.no_scale:
        flags["target_max"] = args.scale
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return build_config(values)
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pnlf", description="PID-controlled non-negative tensor completion")
    parser.add_argument("--version", action="version", version=f"pnlf {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic low-rank tensor")
    p.add_argument("--dims", type=_int_list, required=True, help="I,J,K")
    p.add_argument("--rank", type=int, required=True, help="true CP rank")
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise standard deviation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="tensor CSV to write")
    p.add_argument("--truth", type=Path, help="also write the generating factors (factor CSV)")

    p = sub.add_parser("ingest", help="meter reading CSV -> tensor CSV")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--time-column", default="timestamp")
    p.add_argument("--meter-column", default="meter")
    p.add_argument("--value-column", default="power")
    p.add_argument("--date-column", default=None)
    p.add_argument("--seconds-per-step", type=int, default=1)
    p.add_argument("--date-origin", type=dt.date.fromisoformat, default=None)
    p.add_argument("--meter-map", type=Path, help="write the j -> meter id mapping here")

    p = sub.add_parser("train", help="fit a model")
    p.add_argument("--tensor", type=Path, required=True)
    p.add_argument("--model", type=Path, help="model container (.npz) to write")
    p.add_argument("--report", type=Path, help="per-epoch history CSV to write")
    _add_hyper_options(p)

    p = sub.add_parser("evaluate", help="score a saved model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--tensor", type=Path, required=True)
    p.add_argument("--part", choices=("train", "validation", "test", "all"), default="test")

    p = sub.add_parser("impute", help="predict cells with a saved model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True, help="CSV of i,j,k cells")
    p.add_argument("--out", type=Path, help="CSV to write (default: stdout)")
    p.add_argument("--clamp", action="store_true", help="clip to the training value range")

    p = sub.add_parser("ablate", help="PID vs plain SGD")
    p.add_argument("--tensor", type=Path, required=True)
    _add_hyper_options(p)

    p = sub.add_parser("sweep", help="hyperparameter grid")
    p.add_argument("--tensor", type=Path, required=True)
    p.add_argument(
        "--grid",
        action="append",
        required=True,
        metavar="NAME=V1,V2,...",
        help="parameter to vary (repeat for a 2-D grid)",
    )
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, help="flat CSV table to write")
    _add_hyper_options(p)
    return parser


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _run_header(command: str, cfg: RunConfig | None, backend: str | None = None) -> dict:
    out = {"type": "run", "command": command, "version": __version__}
    if cfg is not None:
        out["config"] = cfg.snapshot()
    if backend is not None:
        out["backend"] = backend
    return out


def _prepare(args, cfg: RunConfig):
    tensor = read_tensor_csv(args.tensor)
    scaling = None
    if not args.no_scale:
        tensor, scaling = scale_linear(tensor, cfg.target_max)
    return tensor, scaling


def _cmd_synth(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tensor, truth = synth_low_rank(args.dims, args.rank, args.seed, args.noise, args.density)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_tensor_csv(tensor, args.out)
    if args.truth:
        truth.save_csv(args.truth)
    _emit(_run_header("synth", None) | {"seed": args.seed, "dims": list(tensor.dims), "nnz": tensor.nnz,
                                         "density": tensor.density, "true_rank": args.rank, "noise": args.noise})
    return 0


def _cmd_ingest(args) -> int:
    spec = IngestSpec(
        time_step_column=args.time_column,
        meter_column=args.meter_column,
        value_column=args.value_column,
        date_column=args.date_column,
        seconds_per_step=args.seconds_per_step,
        date_origin=args.date_origin,
    )
    result = ingest_csv(args.input, spec)
    write_tensor_csv(result.tensor, args.out)
    if args.meter_map:
        write_meter_map(result, args.meter_map)
    _emit(_run_header("ingest", None) | {
        "dims": list(result.tensor.dims),
        "nnz": result.tensor.nnz,
        "density": result.tensor.density,
        "meters": result.meters,
        "date_origin": None if result.date_origin is None else result.date_origin.isoformat(),
        "skipped": result.skipped,
    })
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    backend = resolve_backend(args.backend)
    _emit(_run_header("train", cfg, backend))
    tensor, scaling = _prepare(args, cfg)
    splits = split(tensor, cfg.ratios, cfg.seed)
    factors, _, report = train_split(splits, cfg.hyper, cfg.seed, backend=backend, strict=args.strict)
    for rec in report.records():
        _emit(rec)
    if cfg.repeats > 1:
        summary = repeat(tensor, cfg.ratios, cfg.hyper, cfg.seed, cfg.repeats, backend=backend)
        _emit({"type": "repeats", **summary.summary()})
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("epoch,rmse,mae,ms\n")
            for h in report.history:
                fh.write(f"{h.epoch},{h.rmse!r},{h.mae!r},{h.ms:.3f}\n")
    if args.model:
        save_model(Model(factors, scaling, cfg.hyper, cfg.seed, cfg.ratios, backend), args.model)
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    tensor = read_tensor_csv(args.tensor)
    if model.scaling is not None:
        tensor = tensor.with_values(model.scaling.scale(tensor.values))
    if args.part == "all":
        part = tensor
    else:
        splits = split(tensor, model.ratios, model.seed)
        part = {"train": splits.train, "validation": splits.validation, "test": splits.test}[args.part]
    m = evaluate(model.factors, part)
    span = model.effective_scaling
    factor = (span.y_max - span.y_min) / span.target_max
    _emit(_run_header("evaluate", None) | {"seed": model.seed, "hyper": model.hyper.to_dict()})
    _emit({"type": "metrics", "part": args.part, "rmse": m.rmse, "mae": m.mae, "count": m.count,
           "rmse_raw": m.rmse * factor, "mae_raw": m.mae * factor})
    return 0


def _cmd_impute(args) -> int:
    model = load_model(args.model)
    rows = impute(model.factors, model.effective_scaling, read_queries_csv(args.queries), clamp=args.clamp)
    if args.out:
        write_cells_csv(rows, args.out)
        _emit(_run_header("impute", None) | {"seed": model.seed, "cells": len(rows)})
    else:
        sys.stdout.write("i,j,k,value\n")
        for i, j, k, v in rows:
            sys.stdout.write(f"{i},{j},{k},{v!r}\n")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    backend = resolve_backend(args.backend)
    _emit(_run_header("ablate", cfg, backend))
    tensor, _ = _prepare(args, cfg)
    result = ablate(split(tensor, cfg.ratios, cfg.seed), cfg.hyper, cfg.seed, backend=backend)
    out = {"type": "ablation", "pid_epochs": result.pid.epochs_run, "baseline_epochs": result.baseline.epochs_run,
           "reduction_pct": result.reduction_pct}
    for name, rep in (("pid", result.pid), ("baseline", result.baseline)):
        if rep.final_metrics:
            out[f"{name}_rmse"] = rep.final_metrics.rmse
            out[f"{name}_mae"] = rep.final_metrics.mae
        out[f"{name}_stop_reason"] = rep.stop_reason
    _emit(out)
    return 0


def _parse_grid(items: list[str]) -> dict[str, list]:
    grid = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"--grid expects NAME=V1,V2,..., got {item!r}")
        name, values = item.split("=", 1)
        name = name.strip().replace("-", "_")
        conv = int if name in ("rank", "max_epochs") else float
        try:
            grid[name] = [conv(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--grid {name}: values must be numbers") from None
    return grid


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    grid = _parse_grid(args.grid)
    backend = resolve_backend(args.backend)
    _emit(_run_header("sweep", cfg, backend) | {"grid": grid})
    tensor, _ = _prepare(args, cfg)
    report = sweep(split(tensor, cfg.ratios, cfg.seed), cfg.hyper, grid, cfg.seed,
                   workers=args.workers, backend=backend)
    for row in report.rows:
        _emit({"type": "cell", **row})
    if args.out:
        Path(args.out).write_text(report.to_csv())
    return 0


HANDLERS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "impute": _cmd_impute,
    "ablate": _cmd_ablate,
    "sweep": _cmd_sweep,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS and argv[0] not in ("-h", "--help", "--version"):
        if argv:
            print(f"pnlf: unknown command {argv[0]!r}", file=sys.stderr)
        sys.stderr.write(SYNOPSIS)
        return 1
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "no_scale", False) is False and getattr(args, "scale", 1.0) <= 0:
            raise UsageError("--scale must be positive")
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        sys.stderr.write(SYNOPSIS)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (PNLFError, OSError, ValueError) as exc:
        print(f"pnlf {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
