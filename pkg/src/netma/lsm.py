# netma/lsm.py
# Inner-product latent space model for one layer:
#     Theta[i, j] = alpha_i + alpha_j + U_i^T Lambda U_j,  Lambda diagonal,
# fitted on the observed edges by projected gradient descent (joint Armijo
# step on alpha, U, diag Lambda; U's columns kept mean-centered by projecting
# the gradient onto the centered subspace).

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    THETA_CLAMP,
    EdgeFamily,
    InvalidInputError,
    LayerData,
    NumericalFailure,
    RngStream,
    b_prime,
    nll_edge,
)


def edge_objective(family: EdgeFamily, a, theta):
    """Hot-path nll_edge without input checks.

    Non-finite theta propagates to a non-finite objective, which the line
    search rejects; the logistic clamp maps overflowed theta into range.
    """
    if family is EdgeFamily.BERNOULLI_LOGISTIC:
        t = np.clip(theta, -THETA_CLAMP, THETA_CLAMP)
        return np.logaddexp(0.0, t) - a * t
    return 0.5 * theta * theta - a * theta


def mean_link(family: EdgeFamily, theta):
    """Hot-path b_prime without input checks."""
    if family is EdgeFamily.GAUSSIAN_IDENTITY:
        return theta + 0.0
    t = np.clip(theta, -THETA_CLAMP, THETA_CLAMP)
    return 1.0 / (1.0 + np.exp(-t))


class InitScheme(Enum):
    RANDOM_GAUSSIAN = "random"
    SPECTRAL_WARM_START = "spectral"


@dataclass(frozen=True)
class FitOptions:
    """Projected gradient descent settings.

    The Armijo line search starts each iteration from twice the previously
    accepted step (capped at step_init) and backtracks by backtrack_factor.
    """

    max_iters: int = 2000
    rel_tol: float = 1e-6
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    init: InitScheme = InitScheme.RANDOM_GAUSSIAN
    rng: RngStream | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise InvalidInputError("rel_tol must be positive")
        if not (0.0 < self.backtrack_factor < 1.0):
            raise InvalidInputError("backtrack_factor must be in (0, 1)")
        if not (0.0 < self.armijo_c < 1.0):
            raise InvalidInputError("armijo_c must be in (0, 1)")
        if self.step_init <= 0:
            raise InvalidInputError("step_init must be positive")


@dataclass(frozen=True)
class LsmParams:
    """Fitted layer parameters.

    alpha: per-node degree heterogeneity, length n.
    U:     latent positions, (n, d), columns mean-centered after fitting.
    lam:   diagonal of the d x d connection matrix.
    objective / iterations record the final fit state (None for hand-built
    parameter sets).
    """

    alpha: np.ndarray
    U: np.ndarray
    lam: np.ndarray
    objective: float | None = None
    iterations: int | None = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        U = np.asarray(self.U, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        if U.ndim != 2 or alpha.ndim != 1 or lam.ndim != 1:
            raise InvalidInputError("alpha/U/lam must be 1-D/2-D/1-D arrays")
        if U.shape[0] != alpha.shape[0] or U.shape[1] != lam.shape[0]:
            raise InvalidInputError("alpha/U/lam shapes are inconsistent")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(U)) and np.all(np.isfinite(lam))):
            raise InvalidInputError("parameters must be finite")
        for arr in (alpha, U, lam):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "lam", lam)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    def Lambda(self) -> np.ndarray:
        return np.diag(self.lam)

    def theta_matrix(self) -> np.ndarray:
        """Full symmetric (n, n) natural-parameter matrix.

        The diagonal is filled by the same formula but carries no meaning
        (no self-loops); downstream code never reads it. The product is
        symmetrized explicitly: matmul rounding is not exactly symmetric.
        """
        a = self.alpha
        G = (self.U * self.lam) @ self.U.T
        G = 0.5 * (G + G.T)
        return a[:, None] + a[None, :] + G


def predict_means(params: LsmParams, family: EdgeFamily) -> np.ndarray:
    """Entrywise mean link of the fitted natural parameters, all pairs."""
    return b_prime(family, params.theta_matrix())


def _edge_theta(alpha, U, lam, iu, ju):
    return alpha[iu] + alpha[ju] + np.einsum("ed,ed->e", U[iu] * lam, U[ju])


def nll(params: LsmParams, layer: LayerData, family: EdgeFamily) -> float:
    """Negative log-likelihood summed over the layer's observed edges."""
    if params.n != layer.n:
        raise InvalidInputError("parameter/node-count mismatch")
    theta = _edge_theta(params.alpha, params.U, params.lam,
                        layer.edges[:, 0], layer.edges[:, 1])
    return float(np.sum(nll_edge(family, layer.values, theta)))


def gradient(params: LsmParams, layer: LayerData, family: EdgeFamily):
    """Analytic gradient of nll w.r.t. (alpha, U, diag Lambda).

    Residuals r_ij = b'(Theta_ij) - A_ij enter only on observed edges.
    """
    if params.n != layer.n:
        raise InvalidInputError("parameter/node-count mismatch")
    theta = params.theta_matrix()
    resid = b_prime(family, theta)
    resid *= layer.mask_matrix()
    resid -= layer.value_matrix()
    g_alpha = resid.sum(axis=1)
    RU = resid @ params.U
    g_U = RU * params.lam
    g_lam = 0.5 * np.einsum("id,id->d", params.U, RU)
    return g_alpha, g_U, g_lam


# ---------------------------------------------------------------------------
# Generic Armijo descent on a list-of-arrays parameter block
# ---------------------------------------------------------------------------

def armijo_minimize(x0, fun, grad, project_grad, opts: FitOptions, on_accept=None):
    """Backtracking gradient descent with a linear-subspace projection.

    x0 is a list of arrays; `project_grad` maps the gradient list onto the
    feasible directions (here: centering latent columns), which keeps
    iterates feasible because the constraint set is a linear subspace.
    Returns (x, objective, iterations). Accepted steps never increase the
    objective (Armijo condition); `on_accept(f)` is called after each one.
    Raises NumericalFailure if the objective turns non-finite at the
    current iterate.
    """
    x = [np.array(a, dtype=float) for a in x0]
    f = fun(x)
    if not np.isfinite(f):
        raise NumericalFailure("objective non-finite at the initial point", last_params=None)
    if on_accept is not None:
        on_accept(f)
    step = opts.step_init
    it = 0
    for it in range(1, opts.max_iters + 1):
        g = project_grad(grad(x))
        gsq = sum(float(np.sum(gi * gi)) for gi in g)
        if gsq == 0.0:
            break
        step = min(step * 2.0, opts.step_init * 1e6)
        accepted = False
        while step > 1e-20:
            cand = [xi - step * gi for xi, gi in zip(x, g)]
            fc = fun(cand)
            if np.isfinite(fc) and fc <= f - opts.armijo_c * step * gsq:
                accepted = True
                break
            step *= opts.backtrack_factor
        if not accepted:
            break  # no descent step representable; treat as stationary
        x, f_prev, f = cand, f, fc
        if on_accept is not None:
            on_accept(f)
        if abs(f_prev - f) <= opts.rel_tol * max(1.0, abs(f_prev)):
            break
    if not np.isfinite(f):
        raise NumericalFailure("objective became non-finite", last_params=x)
    return x, f, it


def _center_columns(U: np.ndarray) -> np.ndarray:
    return U - U.mean(axis=0, keepdims=True)


def _random_init(n, d, rng: RngStream):
    if rng is None:
        raise InvalidInputError("random initialization requires an RngStream")
    gen = rng.generator()
    # variance 1/sqrt(n), per-entry; small enough that theta starts near 0
    U = gen.normal(0.0, n ** -0.25, size=(n, d))
    return np.zeros(n), _center_columns(U), np.full(d, -0.5)


def _spectral_init(layer: LayerData, d: int):
    # top-|eigenvalue| directions of the doubly centered zero-filled values
    A = layer.value_matrix()
    A -= A.mean(axis=0, keepdims=True)
    A -= A.mean(axis=1, keepdims=True)
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    top = np.argsort(-np.abs(w))[:d]
    U = V[:, top] * np.sqrt(np.abs(w[top]))
    lam = np.where(w[top] >= 0.0, 1.0, -1.0)
    return np.zeros(layer.n), _center_columns(U), lam


def fit(layer: LayerData, family: EdgeFamily, d: int, opts: FitOptions) -> LsmParams:
    """Fit the latent space model on one layer's observed edges.

    Contract: U's columns are mean-centered on return; the objective is
    monotone nonincreasing across accepted steps; iteration stops when the
    relative objective change drops below opts.rel_tol or at max_iters.
    Deterministic given opts.rng.

    A node with no observed incident edge has an identically zero gradient:
    its alpha stays exactly 0 and its latent row moves only through the
    shared centering correction.
    """
    if d < 1:
        raise InvalidInputError("latent dimension must be >= 1")
    if layer.edge_count == 0:
        raise InvalidInputError("cannot fit a layer with no observed edges")

    if opts.init is InitScheme.SPECTRAL_WARM_START:
        alpha0, U0, lam0 = _spectral_init(layer, d)
    else:
        alpha0, U0, lam0 = _random_init(layer.n, d, opts.rng)

    iu, ju = layer.edges[:, 0], layer.edges[:, 1]
    a_obs = layer.values
    mask = layer.mask_matrix()
    Amat = layer.value_matrix()

    def fun(x):
        alpha, U, lam = x
        with np.errstate(over="ignore", invalid="ignore"):
            theta = _edge_theta(alpha, U, lam, iu, ju)
            return float(np.sum(edge_objective(family, a_obs, theta)))

    def grad(x):
        alpha, U, lam = x
        with np.errstate(over="ignore", invalid="ignore"):
            theta = alpha[:, None] + alpha[None, :] + (U * lam) @ U.T
            resid = mean_link(family, theta)
        resid *= mask
        resid -= Amat
        RU = resid @ U
        return [resid.sum(axis=1), RU * lam, 0.5 * np.einsum("id,id->d", U, RU)]

    def project(g):
        return [g[0], _center_columns(g[1]), g[2]]

    try:
        (alpha, U, lam), f, iters = armijo_minimize([alpha0, U0, lam0], fun, grad, project, opts)
    except NumericalFailure as err:
        if err.last_params is not None:
            a_, U_, l_ = err.last_params
            err.last_params = LsmParams(a_, _center_columns(U_), l_)
        raise
    return LsmParams(alpha, _center_columns(U), lam, objective=f, iterations=iters)
