# netma/pipeline.py
# End-to-end orchestration: full candidate fits for every (layer, dimension),
# per-fold refits of the target layer, the simplex weight solve, and the
# final averaged prediction over the target's missing pairs. Auxiliary
# layers can be fitted in isolated worker processes that see the raw edges
# locally but return only prediction values.

from __future__ import annotations

import dataclasses
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    DispatchError,
    EdgeFamily,
    InvalidInputError,
    LayerData,
    MultilayerDataset,
    RngStream,
    all_pairs,
)
from .lsm import FitOptions, fit, predict_means
from .averaging import (
    CandidatePredictions,
    WeightVector,
    build_cv_problem,
    candidate_cv_values,
    make_folds,
    predict_averaged,
    solve_weights,
)


class ExecutionMode(Enum):
    IN_PROCESS = "inprocess"
    WORKERS = "workers"


def default_max_workers() -> int:
    env = os.environ.get("NETMA_MAX_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class TransferMaConfig:
    """Run configuration: candidate dimensions, folds, fit template, seed.

    `fit_options.rng` is ignored; per-task streams are derived from `seed`,
    the layer, the candidate dimension, and the fold.
    """

    dims: tuple[int, ...]
    K: int = 10
    fit_options: FitOptions = field(default_factory=FitOptions)
    seed: int = 0
    execution: ExecutionMode = ExecutionMode.IN_PROCESS
    max_workers: int | None = None
    worker_timeout: float = 600.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0:
            raise InvalidInputError("need at least one candidate dimension")
        if any(d < 1 for d in dims) or any(b <= a for a, b in zip(dims, dims[1:])):
            raise InvalidInputError("dims must be strictly increasing positive integers")
        if self.K < 2:
            raise InvalidInputError("K must be at least 2")
        object.__setattr__(self, "dims", dims)


@dataclass(frozen=True)
class FitTask:
    """One layer's fit request: which dimensions, which edges to report."""

    layer_id: int
    dims: tuple[int, ...]
    edges: np.ndarray
    options: FitOptions
    seed: int


@dataclass(frozen=True)
class WorkerReply:
    """Per-candidate mean values on the requested edges, plus fit metadata.

    Contains no raw adjacency values: `means[m]` holds b'(Theta_hat) for
    dims[m] on `edges` only.
    """

    layer: int
    dims: tuple[int, ...]
    edges: np.ndarray
    means: np.ndarray  # (M, E)
    meta: tuple[dict, ...]

    def to_payload(self) -> dict:
        return {
            "layer": self.layer,
            "dims": list(self.dims),
            "edges": self.edges,
            "means": self.means,
            "meta": list(self.meta),
        }

    @staticmethod
    def from_payload(payload: dict) -> "WorkerReply":
        return WorkerReply(
            layer=int(payload["layer"]),
            dims=tuple(int(d) for d in payload["dims"]),
            edges=np.asarray(payload["edges"], dtype=np.int64),
            means=np.asarray(payload["means"], dtype=float),
            meta=tuple(payload["meta"]),
        )


@dataclass(frozen=True)
class TransferMaResult:
    """Weights, averaged predictions over the target's missing pairs, and
    run diagnostics (per-candidate CV values, fold sizes, fit metadata,
    timings). `candidates` retains the fitted mean matrices so baselines can
    be computed without refitting."""

    weights: WeightVector
    missing_edges: np.ndarray
    predictions: np.ndarray
    cv_value: float
    candidates: CandidatePredictions
    diagnostics: dict

    def prediction_map(self) -> dict:
        return {(int(i), int(j)): float(v)
                for (i, j), v in zip(self.missing_edges, self.predictions)}


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _fit_request_payload(task: FitTask) -> dict:
    o = task.options
    return {
        "layer": task.layer_id,
        "dims": list(task.dims),
        "edges": task.edges,
        "seed": task.seed,
        "options": {
            "max_iters": o.max_iters,
            "rel_tol": o.rel_tol,
            "step_init": o.step_init,
            "backtrack_factor": o.backtrack_factor,
            "armijo_c": o.armijo_c,
            "init": o.init.value,
        },
    }


def _compute_reply(task: FitTask, layer: LayerData, family: EdgeFamily) -> WorkerReply:
    from .workers import compute_fit_reply

    payload = compute_fit_reply(layer, family, _fit_request_payload(task))
    return WorkerReply.from_payload(payload)


def _worker_reply(task: FitTask, layer: LayerData, family: EdgeFamily,
                  timeout: float) -> WorkerReply:
    from . import fileio
    from .workers import (
        KIND_ERROR,
        KIND_FIT_REPLY,
        KIND_FIT_REQUEST,
        encode_frame,
        read_frame,
    )

    single = MultilayerDataset(layers=(layer,), families=(family,))
    with tempfile.TemporaryDirectory(prefix="netma-worker-") as tmp:
        layer_file = os.path.join(tmp, f"layer{task.layer_id}.txt")
        fileio.write_dataset(layer_file, single)
        proc = subprocess.Popen(
            [sys.executable, "-m", "netma.workers", "--layer-file", layer_file],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        )
        try:
            proc.stdin.write(encode_frame(KIND_FIT_REQUEST, _fit_request_payload(task)))
            proc.stdin.flush()
            kind, payload = read_frame(proc.stdout, timeout=timeout, layer=task.layer_id)
        except DispatchError:
            proc.kill()
            raise
        finally:
            try:
                proc.stdin.close()
            except OSError:
                pass
            proc.wait(timeout=30)
        if kind == KIND_ERROR:
            raise DispatchError(f"worker error: {payload.get('error')}", layer=task.layer_id)
        if kind != KIND_FIT_REPLY:
            raise DispatchError(f"unexpected reply kind {kind}", layer=task.layer_id)
    return WorkerReply.from_payload(payload)


def dispatch_layer_fit(task: FitTask, layer: LayerData, family: EdgeFamily,
                       mode: ExecutionMode, timeout: float = 600.0,
                       retries: int = 1) -> WorkerReply:
    """Run one layer's fits locally or in an isolated worker process.

    Results are byte-identical across modes for the same task. Worker
    crashes and timeouts raise DispatchError after `retries` retries.
    """
    if mode is ExecutionMode.IN_PROCESS:
        return _compute_reply(task, layer, family)
    last_err = None
    for _ in range(retries + 1):
        try:
            return _worker_reply(task, layer, family, timeout)
        except DispatchError as err:
            last_err = err
    raise last_err


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def _expand(n, edges, values) -> np.ndarray:
    mat = np.zeros((n, n))
    mat[edges[:, 0], edges[:, 1]] = values
    mat[edges[:, 1], edges[:, 0]] = values
    return mat


def run_transfer_ma(dataset: MultilayerDataset, cfg: TransferMaConfig) -> TransferMaResult:
    """Run the full averaging pipeline on a multilayer dataset.

    Fits every (layer, dimension) candidate on its full observed edges and
    the target layer once more per fold with that fold held out; solves for
    the CV-optimal simplex weights; returns the weighted prediction over the
    target's missing pairs, built from the full-data fits. Deterministic
    given cfg.seed. A failing candidate aborts the run with the failing
    (layer, dimension, fold) identified; completed fit metadata is attached
    to the exception's `partial` attribute.
    """
    target = dataset.target
    if target.edge_count < cfg.K:
        raise InvalidInputError("target layer has fewer observed edges than folds")
    n, R, dims, K = dataset.n, dataset.R, cfg.dims, cfg.K
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    fit_meta: dict = {}

    folds = make_folds(target.edges, K, RngStream(cfg.seed, "folds"))
    requested = all_pairs(n)

    full: dict = {}
    target_folds: dict = {}

    def record_failure(err, where):
        err.partial = {"failed": where, "completed": dict(fit_meta)}
        return err

    # target layer: full fits and per-fold refits, always local
    t_fit = time.perf_counter()
    for m, d in enumerate(dims):
        opts = dataclasses.replace(cfg.fit_options,
                                   rng=RngStream(cfg.seed, f"fit:d={d}", layer=0, fold=0))
        try:
            params = fit(target, dataset.families[0], d, opts)
        except Exception as err:
            raise record_failure(err, (0, m, "full"))
        full[(0, m)] = predict_means(params, dataset.families[0])
        fit_meta[(0, m, "full")] = {"objective": params.objective,
                                    "iterations": params.iterations, "d": d}
        for k in range(K):
            sub = target.subset(folds.fold_of != k)
            opts_k = dataclasses.replace(
                cfg.fit_options, rng=RngStream(cfg.seed, f"fit:d={d}", layer=0, fold=k + 1))
            try:
                params_k = fit(sub, dataset.families[0], d, opts_k)
            except Exception as err:
                raise record_failure(err, (0, m, k))
            target_folds[(m, k)] = predict_means(params_k, dataset.families[0])
            fit_meta[(0, m, k)] = {"objective": params_k.objective,
                                   "iterations": params_k.iterations, "d": d}
    timings["target_fits"] = time.perf_counter() - t_fit

    # auxiliary layers, possibly in workers
    t_aux = time.perf_counter()
    tasks = []
    for r in range(1, R):
        tasks.append(FitTask(layer_id=r, dims=dims, edges=requested,
                             options=cfg.fit_options, seed=cfg.seed))

    def run_task(task: FitTask) -> WorkerReply:
        return dispatch_layer_fit(task, dataset.layers[task.layer_id],
                                  dataset.families[task.layer_id],
                                  cfg.execution, timeout=cfg.worker_timeout)

    max_workers = cfg.max_workers or default_max_workers()
    if tasks:
        if cfg.execution is ExecutionMode.WORKERS and max_workers > 1:
            with ThreadPoolExecutor(max_workers=min(max_workers, len(tasks))) as pool:
                replies = list(pool.map(run_task, tasks))
        else:
            replies = []
            for task in tasks:
                try:
                    replies.append(run_task(task))
                except Exception as err:
                    raise record_failure(err, (task.layer_id, None, "full"))
        for task, reply in zip(tasks, replies):
            for m, d in enumerate(dims):
                full[(reply.layer, m)] = _expand(n, reply.edges, reply.means[m])
                fit_meta[(reply.layer, m, "full")] = dict(reply.meta[m])
    timings["auxiliary_fits"] = time.perf_counter() - t_aux

    preds = CandidatePredictions(full=full, target_folds=target_folds,
                                 R=R, dims=dims, K=K)

    t_w = time.perf_counter()
    problem = build_cv_problem(dataset, preds, folds)
    weights = solve_weights(problem)
    timings["weight_solve"] = time.perf_counter() - t_w

    missing = target.missing_pairs()
    predictions = predict_averaged(weights, preds, missing)
    timings["total"] = time.perf_counter() - t0

    diagnostics = {
        "candidate_cv": candidate_cv_values(problem),
        "column_index": preds.column_index(),
        "fold_sizes": folds.fold_sizes(),
        "fit_meta": fit_meta,
        "timings": timings,
        "seed": cfg.seed,
        "dims": dims,
        "K": K,
        "execution": cfg.execution.value,
    }
    return TransferMaResult(weights=weights, missing_edges=missing,
                            predictions=predictions,
                            cv_value=problem.cv_value(weights.w),
                            candidates=preds, diagnostics=diagnostics)
