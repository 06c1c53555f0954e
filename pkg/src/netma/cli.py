# netma/cli.py
# Command-line front end: scenario simulation, pipeline runs on edge-list
# files, metric evaluation, and the figure-series reproduction sweeps.
# Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid input, 5 numerical.

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, fileio
from .core import (
    InvalidInputError,
    IncompleteInputError,
    NumericalFailure,
    SolverFailure,
    DispatchError,
    derive_seed,
)
from .evaluation import MetricReport, smpe, smpr, write_metric_reports
from .experiments import SWEEPS, reproduce_series, write_series_csv
from .pipeline import ExecutionMode, TransferMaConfig, run_transfer_ma
from .simgen import generate_full, load_scenario, scenario_to_dict

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INVALID = 4
EXIT_NUMERICAL = 5


class UsageError(Exception):
    pass


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise UsageError(f"bad --dims value {text!r}; expected e.g. 1,2,3")
    if not dims:
        raise UsageError("--dims must list at least one dimension")
    return dims


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.replicates):
        rep_seed = derive_seed(scenario.seed, "replicate", i)
        rep = scenario_from_seed(scenario, rep_seed)
        dataset, truth, holdouts = generate_full(rep)
        rep_dir = os.path.join(args.out, f"rep{i:03d}")
        os.makedirs(rep_dir, exist_ok=True)
        t0 = time.perf_counter()
        fileio.write_dataset(os.path.join(rep_dir, "dataset.txt"), dataset)
        fileio.write_truth(os.path.join(rep_dir, "truth.txt"), truth.mean_star)
        fileio.write_holdout(os.path.join(rep_dir, "holdout.txt"), dataset.n, holdouts)
        fileio.write_manifest(os.path.join(rep_dir, "manifest.json"), {
            "command": "simulate",
            "version": __version__,
            "scenario": scenario_to_dict(rep),
            "replicate": i,
            "seed": rep_seed,
            "timings": {"write": time.perf_counter() - t0},
            "outputs": ["dataset.txt", "truth.txt", "holdout.txt"],
        })
    print(f"wrote {args.replicates} replicate(s) under {args.out}")
    return EXIT_OK


def scenario_from_seed(scenario, seed):
    import dataclasses
    return dataclasses.replace(scenario, seed=seed)


def _run_config(args) -> TransferMaConfig:
    return TransferMaConfig(
        dims=_parse_dims(args.dims),
        K=args.K,
        seed=args.seed,
        execution=ExecutionMode(args.mode),
        max_workers=args.max_workers,
    )


def cmd_run(args) -> int:
    if args.from_manifest:
        m = fileio.read_manifest(args.from_manifest)["config"]
        args.dataset = args.dataset or m["dataset"]
        args.dims, args.K = m["dims"], m["K"]
        args.seed, args.mode = m["seed"], m["mode"]
    if not args.dataset:
        raise UsageError("a dataset file is required (positional or --from-manifest)")
    dataset = fileio.read_dataset(args.dataset)
    cfg = _run_config(args)
    t0 = time.perf_counter()
    result = run_transfer_ma(dataset, cfg)
    os.makedirs(args.out, exist_ok=True)
    pred_path = os.path.join(args.out, "predictions.csv")
    weights_path = os.path.join(args.out, "weights.csv")
    fileio.write_predictions(pred_path, result.missing_edges, result.predictions)
    fileio.write_weights(weights_path, result.weights, cfg.dims,
                         result.diagnostics["candidate_cv"])
    fileio.write_manifest(os.path.join(args.out, "manifest.json"), {
        "command": "run",
        "version": __version__,
        "config": {"dataset": args.dataset, "dims": args.dims, "K": args.K,
                   "seed": args.seed, "mode": args.mode},
        "cv_value": result.cv_value,
        "fold_sizes": result.diagnostics["fold_sizes"].tolist(),
        "timings": {**result.diagnostics["timings"],
                    "command": time.perf_counter() - t0},
        "outputs": ["predictions.csv", "weights.csv"],
    })
    print(f"wrote predictions for {result.missing_edges.shape[0]} pairs to {pred_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    edges, values = fileio.read_predictions(args.predictions)
    if args.metric == "smpr":
        if not args.truth:
            raise UsageError("--metric smpr requires --truth")
        mats = fileio.read_truth(args.truth)
        mat = mats[args.layer - 1]
        if np.any(np.isnan(mat[edges[:, 0], edges[:, 1]])):
            raise InvalidInputError("truth file does not cover the predicted edges")
        value = smpr(edges, values, np.nan_to_num(mat))
    else:
        if not args.holdout:
            raise UsageError("--metric smpe requires --holdout")
        held = fileio.read_holdout(args.holdout)[args.layer - 1]
        if held[0].shape[0] != edges.shape[0]:
            raise InvalidInputError("holdout and prediction edge sets differ in size")
        value = smpe(edges, values, held[0], held[1])
    report = MetricReport(method=args.method, metric=args.metric, value=value,
                          replicate=args.replicate, scenario=args.scenario)
    write_metric_reports(args.out, [report], append=True)
    print(f"{args.method} {args.metric}={value:.6g} appended to {args.out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rows = reproduce_series(args.example, replicates=args.replicates, seed=args.seed,
                            processes=args.max_workers)
    path = os.path.join(args.out, f"example{args.example}_series.csv")
    write_series_csv(path, rows)
    fileio.write_manifest(os.path.join(args.out, f"example{args.example}_manifest.json"), {
        "command": "reproduce",
        "version": __version__,
        "example": args.example,
        "replicates": args.replicates,
        "seed": args.seed,
        "outputs": [os.path.basename(path)],
    })
    print(f"wrote {len(rows)} series rows to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netma",
        description="Multilayer-network link prediction by cross-validated model averaging.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic datasets from a scenario file")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("run", help="run the averaging pipeline on an edge-list dataset")
    p.add_argument("dataset", nargs="?", help="edge-list file")
    p.add_argument("--dims", default="2", help="candidate dimensions, e.g. 1,2,3")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=[m.value for m in ExecutionMode], default="inprocess")
    p.add_argument("--max-workers", type=int, default=None)
    p.add_argument("--from-manifest", default=None, help="re-run a recorded configuration")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("eval", help="score a prediction file and append a metric row")
    p.add_argument("predictions")
    p.add_argument("--metric", choices=["smpr", "smpe"], required=True)
    p.add_argument("--truth", default=None, help="ground-truth means file (smpr)")
    p.add_argument("--holdout", default=None, help="held-out values file (smpe)")
    p.add_argument("--layer", type=int, default=1, help="1-based target layer")
    p.add_argument("--method", default="transfer_ma")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--scenario", default="")
    p.add_argument("--out", required=True, help="metrics CSV to append to")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("reproduce", help="run a figure sweep and emit CSV series")
    p.add_argument("example", choices=sorted(SWEEPS))
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--seed", type=int, default=20260810)
    p.add_argument("--max-workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, IncompleteInputError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, SolverFailure, DispatchError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
