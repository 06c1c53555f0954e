# Independent reference implementations used only by tests. These stay
# deliberately naive (loops, bisection, exhaustive grids) so they cannot
# share a bug with the library code they check.

import numpy as np

_GRID_CACHE = {}


def simplex_grid(dim: int, step: float) -> np.ndarray:
    """All points of the probability simplex with coordinates k*step."""
    m = round(1.0 / step)
    key = (dim, m)
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = _compositions(dim, m) / float(m)
    return _GRID_CACHE[key]


def _compositions(dim, m):
    if dim == 1:
        return np.array([[m]], dtype=np.int32)
    blocks = []
    for a in range(m + 1):
        rest = _compositions(dim - 1, m - a)
        blocks.append(np.column_stack([np.full(rest.shape[0], a, dtype=np.int32), rest]))
    return np.concatenate(blocks)


def grid_min_objective(P: np.ndarray, y: np.ndarray, step: float = 0.005) -> float:
    """Brute-force minimum of ||y - P w||^2 over the simplex grid."""
    W = simplex_grid(P.shape[1], step)
    G = P.T @ P
    b = P.T @ y
    quad = np.einsum("ij,jk,ik->i", W, G, W)
    obj = quad - 2.0 * (W @ b) + float(y @ y)
    return float(obj.min())


def project_simplex_bisection(v: np.ndarray) -> np.ndarray:
    """Euclidean simplex projection via bisection on the shift multiplier."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.maximum(v - tau, 0.0).sum() > 1.0:
            lo = tau
        else:
            hi = tau
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def cv_direct(target_layer, preds, folds, w, index) -> float:
    """Literal fold-by-fold, edge-by-edge evaluation of the CV criterion."""
    total = 0.0
    for e_idx in range(target_layer.edge_count):
        i, j = target_layer.edges[e_idx]
        k = int(folds.fold_of[e_idx])
        pred = 0.0
        for c, (r, m) in enumerate(index):
            if r == 0:
                pred += w[c] * preds.target_folds[(m, k)][i, j]
            else:
                pred += w[c] * preds.full[(r, m)][i, j]
        total += (float(target_layer.values[e_idx]) - pred) ** 2
    return total
