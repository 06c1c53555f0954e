# netma/averaging.py
# Cross-validation weighting: balanced edge folds on the target layer, the
# least-squares design over candidate predictions, and the simplex-constrained
# weight solve (accelerated projected gradient + active-set polish).

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    IncompleteInputError,
    InvalidInputError,
    LayerData,
    MultilayerDataset,
    RngStream,
    SolverFailure,
    canonical_edges,
)


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of the target layer's observed edges into K balanced folds.

    `edges` is the canonical lexsorted edge list; `fold_of[e]` is the fold
    index in 0..K-1 of edges[e]. Fold sizes differ by at most one.
    """

    edges: np.ndarray
    fold_of: np.ndarray
    K: int

    def __post_init__(self):
        e = canonical_edges(self.edges)
        f = np.asarray(self.fold_of, dtype=np.int64)
        if f.shape != (e.shape[0],):
            raise InvalidInputError("fold_of must align with edges")
        if not (1 < self.K <= e.shape[0]):
            raise InvalidInputError("need 1 < K <= number of observed edges")
        if f.min() < 0 or f.max() >= self.K:
            raise InvalidInputError("fold labels out of range")
        sizes = np.bincount(f, minlength=self.K)
        if sizes.min() == 0 or sizes.max() - sizes.min() > 1:
            raise InvalidInputError("folds must be balanced and nonempty")
        e.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "fold_of", f)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K)


def make_folds(edges: np.ndarray, K: int, rng: RngStream) -> FoldAssignment:
    """Uniformly random balanced K-fold partition of an edge set."""
    edges = canonical_edges(edges)
    E = edges.shape[0]
    if not (1 < K <= E):
        raise InvalidInputError(f"need 1 < K <= {E}, got K={K}")
    perm = rng.generator().permutation(E)
    fold_of = np.empty(E, dtype=np.int64)
    for k, chunk in enumerate(np.array_split(perm, K)):
        fold_of[chunk] = k
    return FoldAssignment(edges=edges, fold_of=fold_of, K=K)


@dataclass(frozen=True)
class CandidatePredictions:
    """Mean-value matrices for every candidate model.

    full[(r, m)] is the (n, n) mean matrix fitted on all observed edges of
    layer r at candidate dimension dims[m]; target_folds[(m, k)] is the
    target-layer refit with fold k held out. Matrices are symmetric; their
    diagonals are meaningless.
    """

    full: dict
    target_folds: dict
    R: int
    dims: tuple[int, ...]
    K: int

    @property
    def M(self) -> int:
        return len(self.dims)

    def column_index(self) -> tuple[tuple[int, int], ...]:
        """Candidate order used everywhere: (r, m), r-major."""
        return tuple((r, m) for r in range(self.R) for m in range(self.M))

    def validate_complete(self):
        for r in range(self.R):
            for m in range(self.M):
                if (r, m) not in self.full:
                    raise IncompleteInputError(f"missing full prediction for (r={r}, m={m})")
        for m in range(self.M):
            for k in range(self.K):
                if (m, k) not in self.target_folds:
                    raise IncompleteInputError(f"missing fold prediction for (m={m}, k={k})")


@dataclass(frozen=True)
class CvProblem:
    """Least-squares form of the K-fold CV criterion.

    Row e (an observed target edge) and column c = (r, m) hold the candidate
    prediction for that edge; target-layer columns use the fold refit of the
    edge's own fold, auxiliary columns the full fit. CV(w) = ||y - P w||^2.
    """

    design: np.ndarray
    response: np.ndarray
    column_index: tuple[tuple[int, int], ...]

    def __post_init__(self):
        P = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if P.ndim != 2 or y.shape != (P.shape[0],):
            raise InvalidInputError("design/response shapes are inconsistent")
        if P.shape[0] < 1:
            raise InvalidInputError("need at least one observed edge")
        if len(self.column_index) != P.shape[1]:
            raise InvalidInputError("column_index must label every column")
        P.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "design", P)
        object.__setattr__(self, "response", y)

    def cv_value(self, w) -> float:
        r = self.response - self.design @ np.asarray(w, dtype=float)
        return float(r @ r)


def build_cv_problem(dataset: MultilayerDataset, preds: CandidatePredictions,
                     folds: FoldAssignment) -> CvProblem:
    """Assemble the CV design matrix over the target layer's observed edges."""
    preds.validate_complete()
    target = dataset.target
    if folds.edges.shape != target.edges.shape or not np.array_equal(folds.edges, target.edges):
        raise InvalidInputError("fold assignment does not cover the target edge set")
    iu, ju = target.edges[:, 0], target.edges[:, 1]
    cols = []
    for r, m in preds.column_index():
        if r == 0:
            col = np.empty(target.edge_count)
            for k in range(folds.K):
                rows = folds.fold_of == k
                col[rows] = preds.target_folds[(m, k)][iu[rows], ju[rows]]
        else:
            col = preds.full[(r, m)][iu, ju]
        cols.append(col)
    return CvProblem(design=np.column_stack(cols), response=target.values.copy(),
                     column_index=preds.column_index())


# ---------------------------------------------------------------------------
# Simplex-constrained least squares
# ---------------------------------------------------------------------------

def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
        raise InvalidInputError("need a finite 1-D vector")
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > cssv)[0][-1]
    tau = cssv[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class WeightVector:
    """A point on the probability simplex over the RM candidates."""

    w: np.ndarray
    index: tuple[tuple[int, int], ...]

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (len(self.index),):
            raise InvalidInputError("weights must align with the candidate index")
        if np.any(w < -1e-10) or abs(w.sum() - 1.0) > 1e-10:
            raise InvalidInputError("weights must lie on the probability simplex")
        w = np.maximum(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def weight_of(self, r: int, m: int) -> float:
        return float(self.w[self.index.index((r, m))])


def _cv_gradient(G, b, w):
    return 2.0 * (G @ w - b)


def kkt_residual(problem: CvProblem, w) -> float:
    """Stationarity residual of CV(w) on the simplex, in gradient units.

    mu is estimated as w.g (equals the equality multiplier at an optimum);
    the residual is max over support of |g_j - mu| and over zeros of
    (mu - g_j)+, zero exactly at a KKT point.
    """
    w = np.asarray(w, dtype=float)
    P, y = problem.design, problem.response
    g = 2.0 * (P.T @ (P @ w - y))
    mu = float(w @ g)
    on = w > 1e-12
    res_on = np.max(np.abs(g[on] - mu)) if np.any(on) else 0.0
    res_off = np.max(np.maximum(mu - g[~on], 0.0)) if np.any(~on) else 0.0
    return float(max(res_on, res_off))


def _fista(G, b, w0, max_iters, tol_grad):
    # fixed step 1/L on f(w) = w'Gw - 2b'w (+ const), projected, Nesterov accel
    L = 2.0 * max(float(np.linalg.eigvalsh(G)[-1]), 1e-30)
    w = w0.copy()
    z = w0.copy()
    t = 1.0
    for _ in range(max_iters):
        g = _cv_gradient(G, b, z)
        w_next = simplex_project(z - g / L)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_next + ((t - 1.0) / t_next) * (w_next - w)
        move = float(np.max(np.abs(w_next - w)))
        w, t = w_next, t_next
        if move * L <= tol_grad:
            break
    return w


def _active_set_polish(G, b, w, max_rounds=200):
    """Exact primal active-set solve of min w'Gw - 2b'w on the simplex.

    Starts from a feasible w. Returns (w, mu). G must be positive definite
    (the caller adds a tie-breaking ridge).
    """
    RM = G.shape[0]
    S = w > 1e-10
    if not np.any(S):
        S[int(np.argmax(w))] = True
    for _ in range(max_rounds):
        idx = np.nonzero(S)[0]
        k = idx.size
        KKT = np.zeros((k + 1, k + 1))
        KKT[:k, :k] = 2.0 * G[np.ix_(idx, idx)]
        KKT[:k, k] = 1.0
        KKT[k, :k] = 1.0
        rhs = np.concatenate([2.0 * b[idx], [1.0]])
        try:
            sol = np.linalg.solve(KKT, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
        w_S, mu = sol[:k], float(sol[k])
        if np.min(w_S) < -1e-14:
            # step from the current point toward w_S until a coordinate hits 0
            cur = w[idx]
            delta = w_S - cur
            shrink = delta < -1e-30
            with np.errstate(divide="ignore"):
                steps = np.where(shrink, cur / np.maximum(-delta, 1e-300), np.inf)
            t = min(1.0, float(np.min(steps)))
            cur = np.maximum(cur + t * delta, 0.0)
            blocked = int(np.argmin(steps))
            cur[blocked] = 0.0
            w = np.zeros(RM)
            w[idx] = cur
            S = w > 1e-14
            if not np.any(S):
                S[int(np.argmax(b))] = True
            continue
        w = np.zeros(RM)
        w[idx] = w_S
        g = _cv_gradient(G, b, w)
        off = ~S
        if not np.any(off):
            return w, mu
        viol = mu - g[off]
        gscale = max(1.0, float(np.max(np.abs(g))))
        if np.max(viol) <= 1e-12 * gscale:
            return w, mu
        S[np.nonzero(off)[0][int(np.argmax(viol))]] = True
    return w, mu


def solve_weights(problem: CvProblem, tol: float = 1e-8) -> WeightVector:
    """Minimize CV(w) over the probability simplex.

    A ridge eps*||w||^2 with eps = 1e-10 * ||P'P||_op breaks ties between
    collinear candidates toward the minimal-norm minimizer. The returned
    point satisfies the KKT conditions of the ridged problem to machine
    precision; `kkt_residual` on the unridged objective stays below
    tol * max(1, ||grad||_inf) or a SolverFailure is raised with the best
    iterate attached.
    """
    P, y = problem.design, problem.response
    RM = P.shape[1]
    if RM == 1:
        return WeightVector(w=np.array([1.0]), index=problem.column_index)
    G = P.T @ P
    b = P.T @ y
    lam_max = float(np.linalg.eigvalsh(G)[-1])
    eps = 1e-10 * max(lam_max, 1e-30)
    G_r = G + eps * np.eye(RM)

    w0 = np.full(RM, 1.0 / RM)
    w = _fista(G_r, b, w0, max_iters=2000, tol_grad=tol * max(1.0, lam_max))
    w, _ = _active_set_polish(G_r, b, w)

    res = kkt_residual(problem, w)
    g = 2.0 * (P.T @ (P @ w - y))
    gscale = max(1.0, float(np.max(np.abs(g))))
    if res > max(tol * gscale, 1e-6):
        raise SolverFailure(
            f"weight solve stalled with KKT residual {res:.3e}",
            best_weights=WeightVector(w=simplex_project(w), index=problem.column_index),
            kkt_residual=res,
        )
    return WeightVector(w=simplex_project(w), index=problem.column_index)


def predict_averaged(weights: WeightVector, preds: CandidatePredictions,
                     edges: np.ndarray) -> np.ndarray:
    """Weighted prediction on `edges` from full-data candidate fits."""
    if weights.index != preds.column_index():
        raise InvalidInputError("weight index does not match the candidate grid")
    edges = canonical_edges(edges)
    iu, ju = edges[:, 0], edges[:, 1]
    out = np.zeros(edges.shape[0])
    for w_c, (r, m) in zip(weights.w, weights.index):
        if w_c != 0.0:
            out += w_c * preds.full[(r, m)][iu, ju]
    return out


def candidate_cv_values(problem: CvProblem) -> np.ndarray:
    """Standalone CV value of each candidate (unit weight vectors)."""
    diffs = problem.response[:, None] - problem.design
    return np.sum(diffs * diffs, axis=0)
