# netma/evaluation.py
# Prediction metrics (root-sum-squared error against true means or held-out
# values), weight-mass diagnostics, and the comparison baselines: uniform
# averaging, target-layer-only fitting, and the shared-latent joint fit
# across layers (per-layer degree effects and connection matrices, one U).

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import (
    EdgeFamily,
    InvalidInputError,
    MultilayerDataset,
    canonical_edges,
    edge_keys,
)
from .averaging import CandidatePredictions, WeightVector, predict_averaged
from .lsm import (
    FitOptions,
    LsmParams,
    armijo_minimize,
    edge_objective,
    fit,
    mean_link,
    predict_means,
)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _align(pred_edges, pred_values, wanted_edges, n):
    """Values of `pred` at `wanted_edges`; coverage gaps are an error."""
    pred_edges = canonical_edges(pred_edges)
    wanted_edges = canonical_edges(wanted_edges)
    pk = edge_keys(pred_edges, n)
    wk = edge_keys(wanted_edges, n)
    order = np.argsort(pk)
    pos = np.searchsorted(pk[order], wk)
    if np.any(pos >= pk.size) or np.any(pk[order][np.minimum(pos, pk.size - 1)] != wk):
        raise InvalidInputError("predictions do not cover the requested edge set")
    return np.asarray(pred_values, dtype=float)[order][pos]


def smpr(pred_edges, pred_values, truth_mean: np.ndarray, missing_edges=None) -> float:
    """Root-sum-squared gap between predictions and the true mean matrix.

    Evaluated over `missing_edges` (default: all predicted edges); the
    predictions must cover that set.
    """
    truth_mean = np.asarray(truth_mean, dtype=float)
    n = truth_mean.shape[0]
    if missing_edges is None:
        missing_edges = pred_edges
    missing_edges = canonical_edges(missing_edges)
    vals = _align(pred_edges, pred_values, missing_edges, n)
    diff = vals - truth_mean[missing_edges[:, 0], missing_edges[:, 1]]
    return float(np.sqrt(np.sum(diff * diff)))


def smpe(pred_edges, pred_values, heldout_edges, heldout_values) -> float:
    """Root-sum-squared gap between predictions and held-out edge values."""
    heldout_edges = canonical_edges(heldout_edges)
    n = int(max(np.max(canonical_edges(pred_edges)), np.max(heldout_edges))) + 1
    vals = _align(pred_edges, pred_values, heldout_edges, n)
    diff = vals - np.asarray(heldout_values, dtype=float)
    return float(np.sqrt(np.sum(diff * diff)))


@dataclass(frozen=True)
class WeightDiagnostics:
    """Weight mass on a declared informative candidate set.

    tau_hat is the total weight on the set; dist is the distance of the
    complement's normalized weights from an ideal combining vector (None
    when no ideal is given or the complement carries no mass).
    """

    tau_hat: float
    dist: float | None
    weights: np.ndarray
    index: tuple[tuple[int, int], ...]


def weight_diagnostics(weights: WeightVector, informative, ideal=None) -> WeightDiagnostics:
    informative = set(informative)
    unknown = informative.difference(weights.index)
    if unknown:
        raise InvalidInputError(f"informative candidates not in the grid: {sorted(unknown)}")
    in_mask = np.array([idx in informative for idx in weights.index])
    tau_hat = float(weights.w[in_mask].sum())
    dist = None
    if ideal is not None:
        rest = weights.w[~in_mask]
        mass = rest.sum()
        if mass > 0.0:
            ideal = np.asarray(ideal, dtype=float)
            if ideal.shape != rest.shape:
                raise InvalidInputError("ideal vector must match the complement size")
            dist = float(np.linalg.norm(rest / mass - ideal))
    return WeightDiagnostics(tau_hat=tau_hat, dist=dist, weights=weights.w.copy(),
                             index=weights.index)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def simp_ma(preds: CandidatePredictions, edges) -> np.ndarray:
    """Uniform-weight prediction over the full candidate grid."""
    index = preds.column_index()
    uniform = WeightVector(w=np.full(len(index), 1.0 / len(index)), index=index)
    return predict_averaged(uniform, preds, edges)


def target_only(dataset: MultilayerDataset, d: int, opts: FitOptions):
    """Fit only the target layer at one dimension; predict its missing pairs.

    Returns (edges, values) over the target's unobserved pairs.
    """
    params = fit(dataset.target, dataset.families[0], d, opts)
    means = predict_means(params, dataset.families[0])
    edges = dataset.target.missing_pairs()
    return edges, means[edges[:, 0], edges[:, 1]]


def fit_fmlsm(dataset: MultilayerDataset, d: int, opts: FitOptions):
    """Joint fit with one shared U and per-layer (alpha_r, Lambda_r).

    Minimizes the summed per-layer objectives with the same projected
    gradient machinery as the single-layer fit. All layers must share one
    edge family. Returns the per-layer mean matrices b'(Theta_r).
    """
    if d < 1:
        raise InvalidInputError("latent dimension must be >= 1")
    fams = set(dataset.families)
    if len(fams) != 1:
        raise InvalidInputError("joint fit requires a single family across layers")
    family = dataset.families[0]
    n, R = dataset.n, dataset.R

    masks = [layer.mask_matrix() for layer in dataset.layers]
    amats = [layer.value_matrix() for layer in dataset.layers]
    idx = [(layer.edges[:, 0], layer.edges[:, 1]) for layer in dataset.layers]
    vals = [layer.values for layer in dataset.layers]

    if opts.rng is None:
        raise InvalidInputError("joint fit requires an RngStream in FitOptions")
    gen = opts.rng.generator()
    U0 = gen.normal(0.0, n ** -0.25, size=(n, d))
    U0 -= U0.mean(axis=0, keepdims=True)
    x0 = [np.zeros((R, n)), U0, np.full((R, d), -0.5)]

    def fun(x):
        alphas, U, lams = x
        total = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for r in range(R):
                iu, ju = idx[r]
                theta = alphas[r][iu] + alphas[r][ju] + np.einsum(
                    "ed,ed->e", U[iu] * lams[r], U[ju])
                total += float(np.sum(edge_objective(family, vals[r], theta)))
        return total

    def grad(x):
        alphas, U, lams = x
        g_a = np.zeros((R, n))
        g_U = np.zeros((n, d))
        g_l = np.zeros((R, d))
        with np.errstate(over="ignore", invalid="ignore"):
            for r in range(R):
                theta = alphas[r][:, None] + alphas[r][None, :] + (U * lams[r]) @ U.T
                resid = mean_link(family, theta)
                resid *= masks[r]
                resid -= amats[r]
                RU = resid @ U
                g_a[r] = resid.sum(axis=1)
                g_U += RU * lams[r]
                g_l[r] = 0.5 * np.einsum("id,id->d", U, RU)
        return [g_a, g_U, g_l]

    def project(g):
        return [g[0], g[1] - g[1].mean(axis=0, keepdims=True), g[2]]

    (alphas, U, lams), f, iters = armijo_minimize(x0, fun, grad, project, opts)
    U = U - U.mean(axis=0, keepdims=True)
    out = []
    for r in range(R):
        params = LsmParams(alpha=alphas[r], U=U, lam=lams[r], objective=f, iterations=iters)
        out.append(predict_means(params, family))
    return out


# ---------------------------------------------------------------------------
# Metric reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    method: str
    metric: str  # "smpr" | "smpe"
    value: float
    replicate: int
    scenario: str

    def __post_init__(self):
        if self.value < 0:
            raise InvalidInputError("metric values are nonnegative")
        if self.metric not in ("smpr", "smpe"):
            raise InvalidInputError("metric must be smpr or smpe")


METRIC_COLUMNS = ["method", "metric", "value", "replicate", "scenario"]


def write_metric_reports(path, reports, append: bool = False):
    """Write/append MetricReport rows as CSV with a fixed column order."""
    mode = "a" if append else "w"
    import os
    write_header = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(METRIC_COLUMNS)
        for rep in reports:
            writer.writerow([rep.method, rep.metric, repr(rep.value),
                             rep.replicate, rep.scenario])


def read_metric_reports(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricReport(method=row["method"], metric=row["metric"],
                                    value=float(row["value"]),
                                    replicate=int(row["replicate"]),
                                    scenario=row["scenario"]))
    return out
