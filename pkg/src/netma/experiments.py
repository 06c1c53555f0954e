# netma/experiments.py
# Replicated simulation sweeps shared by the reproduce command, the demo
# scripts, and the acceptance suite. One replicate = generate a dataset,
# run the averaging pipeline and/or baselines, score against the true mean.
# Replicates are embarrassingly parallel and keyed by derived seeds, so
# process-parallel runs reproduce serial ones exactly.

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import EdgeFamily, RngStream, derive_seed
from .lsm import FitOptions, InitScheme
from .evaluation import fit_fmlsm, simp_ma, smpr
from .pipeline import TransferMaConfig, run_transfer_ma
from .simgen import Example, SimScenario, generate

TRANSFER_MA = "transfer_ma"
TRANSFER_SIMP_MA = "transfer_simp_ma"
TARGET_ONLY = "target_only"
FMLSM = "fmlsm"


def _fit_options(overrides: dict | None) -> FitOptions:
    if not overrides:
        return FitOptions()
    if "init" in overrides and isinstance(overrides["init"], str):
        overrides = {**overrides, "init": InitScheme(overrides["init"])}
    return FitOptions(**overrides)


def run_replicate(example: str, rep_seed: int, *, n: int = 200, R: int = 4,
                  sigma: float = 3.0, family: str = "gaussian",
                  dims: tuple[int, ...] = (2,), K: int = 10,
                  methods: tuple[str, ...] = (TRANSFER_MA, TRANSFER_SIMP_MA, TARGET_ONLY),
                  fit_overrides: dict | None = None) -> dict:
    """One simulation replicate: generate, fit, score.

    Returns {"smpr": {method label: value}, "weights": list, "windex": list}.
    Method labels for per-dimension baselines carry the dimension, e.g.
    "target_only[d=2]"; weights are present when the pipeline ran.
    """
    dims = tuple(dims)
    scenario = SimScenario(example=Example(example),
                           family=EdgeFamily(family),
                           n=n, R=R, sigma=sigma,
                           seed=derive_seed(rep_seed, "gen"))
    dataset, truth = generate(scenario)
    truth_mean = truth.mean_star[0]
    missing = dataset.target.missing_pairs()
    pipe_seed = derive_seed(rep_seed, "pipe")
    opts = _fit_options(fit_overrides)

    out: dict = {"smpr": {}, "weights": None, "windex": None}
    need_pipeline = bool({TRANSFER_MA, TRANSFER_SIMP_MA} & set(methods))

    if need_pipeline:
        cfg = TransferMaConfig(dims=dims, K=K, seed=pipe_seed, fit_options=opts)
        result = run_transfer_ma(dataset, cfg)
        out["weights"] = result.weights.w.tolist()
        out["windex"] = list(result.weights.index)
        if TRANSFER_MA in methods:
            out["smpr"][TRANSFER_MA] = smpr(missing, result.predictions, truth_mean)
        if TRANSFER_SIMP_MA in methods:
            vals = simp_ma(result.candidates, missing)
            out["smpr"][TRANSFER_SIMP_MA] = smpr(missing, vals, truth_mean)
        if TARGET_ONLY in methods:
            for m, d in enumerate(dims):
                mat = result.candidates.full[(0, m)]
                vals = mat[missing[:, 0], missing[:, 1]]
                out["smpr"][f"{TARGET_ONLY}[d={d}]"] = smpr(missing, vals, truth_mean)
    elif TARGET_ONLY in methods:
        from .lsm import fit, predict_means
        import dataclasses
        for d in dims:
            o = dataclasses.replace(opts, rng=RngStream(pipe_seed, f"fit:d={d}", layer=0, fold=0))
            params = fit(dataset.target, dataset.families[0], d, o)
            mat = predict_means(params, dataset.families[0])
            vals = mat[missing[:, 0], missing[:, 1]]
            out["smpr"][f"{TARGET_ONLY}[d={d}]"] = smpr(missing, vals, truth_mean)

    if FMLSM in methods:
        import dataclasses
        for d in dims:
            o = dataclasses.replace(opts, rng=RngStream(pipe_seed, f"fmlsm:d={d}"))
            mats = fit_fmlsm(dataset, d, o)
            vals = mats[0][missing[:, 0], missing[:, 1]]
            out["smpr"][f"{FMLSM}[d={d}]"] = smpr(missing, vals, truth_mean)
    return out


def _entry(kwargs: dict) -> dict:
    return run_replicate(**kwargs)


def run_replicates(base_seed: int, replicates: int, processes: int | None = None,
                   **point_kwargs) -> list[dict]:
    """Run `replicates` independent replicates of one simulation point."""
    jobs = [dict(point_kwargs, rep_seed=derive_seed(base_seed, "rep", i))
            for i in range(replicates)]
    processes = processes if processes is not None else default_processes()
    if processes <= 1 or replicates <= 1:
        return [_entry(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(processes, replicates)) as pool:
        return list(pool.map(_entry, jobs))


def default_processes() -> int:
    env = os.environ.get("NETMA_MAX_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def median_iqr(values) -> dict:
    v = np.asarray(list(values), dtype=float)
    return {"median": float(np.median(v)),
            "q1": float(np.quantile(v, 0.25)),
            "q3": float(np.quantile(v, 0.75)),
            "replicates": int(v.size)}


def method_medians(outcomes: list[dict]) -> dict:
    """Median SMPR per method label across replicate outcomes."""
    labels = outcomes[0]["smpr"].keys()
    return {lab: float(np.median([o["smpr"][lab] for o in outcomes])) for lab in labels}


def layer_weight_sums(outcome: dict, R: int) -> np.ndarray:
    """Total weight per layer (summing candidate dimensions within a layer)."""
    w = np.zeros(R)
    for weight, (r, _m) in zip(outcome["weights"], outcome["windex"]):
        w[r] += weight
    return w


# ---------------------------------------------------------------------------
# Figure-series sweeps for the reproduce command
# ---------------------------------------------------------------------------

SWEEPS = {
    "1a": {"param": "n", "values": [160, 180, 200, 220, 240]},
    "1b": {"param": "R", "values": [4, 5, 6, 7, 8]},
    "1c": {"param": "sigma", "values": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]},
    "1d": {"param": "K", "values": [5, 10, 20, 50, 100]},
    "1e": {"param": "dims", "values": [(1,), (2,), (3,), (1, 2, 3)]},
    "2": {"param": "dims", "values": [(1,), (2,), (3,), (4,), (5,), (1, 2, 3, 4, 5)]},
    "3": {"param": "n", "values": [200, 300, 400]},
    "4": {"param": "n", "values": [200, 300, 400]},
    "5": {"param": "dims", "values": [(1,), (2,), (3,), (1, 2, 3)]},
}


def _dims_label(dims) -> str:
    return "{" + ",".join(str(d) for d in dims) + "}"


def reproduce_series(example_id: str, replicates: int, seed: int,
                     processes: int | None = None) -> list[dict]:
    """Replicate sweep for one figure; returns tidy rows for CSV export."""
    if example_id not in SWEEPS:
        raise ValueError(f"unknown example id {example_id!r}; choose from {sorted(SWEEPS)}")
    sweep = SWEEPS[example_id]
    rows: list[dict] = []
    for value in sweep["values"]:
        point = {"example": "ex1", "n": 200, "R": 4, "sigma": 3.0, "family": "gaussian",
                 "dims": (2,), "K": 10,
                 "methods": (TRANSFER_MA, TRANSFER_SIMP_MA, TARGET_ONLY, FMLSM)}
        if example_id.startswith("1"):
            point[sweep["param"]] = value
            if example_id == "1d":
                point["methods"] = (TRANSFER_MA,)
            if example_id == "1e" and len(value) > 1:
                point["methods"] = (TRANSFER_MA, TRANSFER_SIMP_MA)
        elif example_id == "2":
            point.update(example="ex2", dims=value, R=4)
            if len(value) > 1:
                point["methods"] = (TRANSFER_MA, TRANSFER_SIMP_MA)
        elif example_id in ("3", "4"):
            point.update(example=f"ex{example_id}", n=value, R=7 if example_id == "3" else 3,
                         methods=(TRANSFER_MA,))
        elif example_id == "5":
            point.update(example="ex5", family="bernoulli", dims=value)
            if len(value) > 1:
                point["methods"] = (TRANSFER_MA, TRANSFER_SIMP_MA)
        base = derive_seed(seed, example_id, repr(value))
        outcomes = run_replicates(base, replicates, processes=processes, **point)

        label = _dims_label(value) if sweep["param"] == "dims" else value
        if example_id == "3":
            R = 7
            per_layer = np.array([layer_weight_sums(o, R) for o in outcomes])
            for r in range(R):
                stats = median_iqr(per_layer[:, r])
                rows.append({"n": value, "layer": r + 1, "series": "layer_weight", **stats})
        elif example_id == "4":
            dists = []
            for o in outcomes:
                w = np.asarray(o["weights"])
                rest = np.array([w[1], w[2]])
                mass = rest.sum()
                if mass > 0:
                    dists.append(float(np.linalg.norm(rest / mass - np.array([0.5, 0.5]))))
            stats = median_iqr(dists)
            rows.append({"n": value, "series": "dist", **stats})
        else:
            for method in outcomes[0]["smpr"]:
                stats = median_iqr([o["smpr"][method] for o in outcomes])
                rows.append({sweep["param"]: label, "method": method,
                             "series": "smpr", **stats})
    return rows


def write_series_csv(path, rows: list[dict]):
    cols: list[str] = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)
