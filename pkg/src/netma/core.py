# netma/core.py
# Shared domain types: exponential-family edge models, canonical edge
# bookkeeping for undirected multilayer networks, and seeded random streams.
# Everything here is immutable after construction and safe to share across
# workers; randomness is always passed explicitly as an RngStream.

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

# Logistic natural parameters are clamped to +-THETA_CLAMP before any exp;
# at double precision this changes nothing below ~1e-13 in the mean link.
THETA_CLAMP = 30.0

_U64 = (1 << 64) - 1


class EdgeFamily(Enum):
    """Exponential-family edge model: cumulant b and mean link b'."""

    GAUSSIAN_IDENTITY = "gaussian"      # b(t) = t^2/2,        b'(t) = t
    BERNOULLI_LOGISTIC = "bernoulli"    # b(t) = log(1+e^t),   b'(t) = 1/(1+e^-t)


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


class IncompleteInputError(ValueError):
    """Raised when a required prediction or data entry is absent."""


class NumericalFailure(RuntimeError):
    """An iterative routine produced a non-finite objective.

    Carries the last finite iterate in `last_params` when available.
    """

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class SolverFailure(RuntimeError):
    """Weight solver failed to reach its optimality contract.

    Carries the best iterate and its KKT residual.
    """

    def __init__(self, message, best_weights=None, kkt_residual=None):
        super().__init__(message)
        self.best_weights = best_weights
        self.kkt_residual = kkt_residual


class DispatchError(RuntimeError):
    """A worker dispatch failed (crash or timeout). Retriable.

    `layer` identifies the failing layer.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


# ---------------------------------------------------------------------------
# Edge families
# ---------------------------------------------------------------------------

def _check_finite_theta(theta):
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("natural parameter must be finite")


def b_value(family: EdgeFamily, theta):
    """Cumulant function b(theta), vectorized."""
    theta = np.asarray(theta, dtype=float)
    _check_finite_theta(theta)
    if family is EdgeFamily.GAUSSIAN_IDENTITY:
        return 0.5 * theta * theta
    t = np.clip(theta, -THETA_CLAMP, THETA_CLAMP)
    return np.logaddexp(0.0, t)


def b_prime(family: EdgeFamily, theta):
    """Mean link b'(theta), vectorized.

    Gaussian returns theta itself; Bernoulli returns the logistic mean,
    strictly inside (0, 1).
    """
    theta = np.asarray(theta, dtype=float)
    _check_finite_theta(theta)
    if family is EdgeFamily.GAUSSIAN_IDENTITY:
        return theta + 0.0
    t = np.clip(theta, -THETA_CLAMP, THETA_CLAMP)
    return 1.0 / (1.0 + np.exp(-t))


def nll_edge(family: EdgeFamily, a, theta):
    """Per-edge negative log-likelihood -[a*theta - b(theta)], vectorized.

    Additive constants that depend only on `a` are dropped, so sums over a
    layer's observed edges equal the layer objective up to a constant. The
    logistic clamp applies to the whole term (the objective is flat beyond
    +-THETA_CLAMP), keeping it bounded below.
    """
    a = np.asarray(a, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if family is EdgeFamily.BERNOULLI_LOGISTIC and not np.all((a == 0.0) | (a == 1.0)):
        raise InvalidInputError("Bernoulli edge values must be 0 or 1")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("edge value must be finite")
    _check_finite_theta(theta)
    if family is EdgeFamily.BERNOULLI_LOGISTIC:
        t = np.clip(theta, -THETA_CLAMP, THETA_CLAMP)
        return np.logaddexp(0.0, t) - a * t
    return 0.5 * theta * theta - a * theta


# ---------------------------------------------------------------------------
# Canonical edges
# ---------------------------------------------------------------------------

def canonical_edges(edges) -> np.ndarray:
    """Canonicalize an (E, 2) array of undirected node pairs to i < j.

    Self-loops and negative indices are rejected. Idempotent.
    """
    e = np.asarray(edges, dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise InvalidInputError("edges must be an (E, 2) array")
    if e.size and e.min() < 0:
        raise InvalidInputError("node indices must be nonnegative")
    if np.any(e[:, 0] == e[:, 1]):
        raise InvalidInputError("self-loops are not allowed")
    return np.sort(e, axis=1)


def all_pairs(n: int) -> np.ndarray:
    """All n(n-1)/2 canonical node pairs of an n-node network, lexsorted."""
    if n < 2:
        raise InvalidInputError("need at least two nodes")
    iu, ju = np.triu_indices(n, k=1)
    return np.column_stack([iu, ju]).astype(np.int64)


def edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    """Collapse canonical pairs to unique scalar keys i*n + j (for set ops)."""
    return edges[:, 0].astype(np.int64) * n + edges[:, 1]


def _lexsort_edges(edges: np.ndarray, values: np.ndarray | None = None):
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    if values is None:
        return edges[order]
    return edges[order], values[order]


def edge_difference(edges_a: np.ndarray, edges_b: np.ndarray, n: int) -> np.ndarray:
    """Canonical pairs in `edges_a` but not in `edges_b`, lexsorted."""
    keys_a = edge_keys(edges_a, n)
    keys_b = edge_keys(edges_b, n)
    keep = ~np.isin(keys_a, keys_b)
    return _lexsort_edges(edges_a[keep])


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Identical (seed, purpose, layer, fold, replicate) tuples reproduce the
    same draws; distinct tuples give statistically independent streams
    (numpy SeedSequence spawn keys). `purpose` is a free-form tag and may
    carry extra context such as a candidate dimension.
    """

    seed: int
    purpose: str = "root"
    layer: int = 0
    fold: int = 0
    replicate: int = 0

    def generator(self) -> np.random.Generator:
        tag = zlib.crc32(self.purpose.encode("utf-8"))
        ss = np.random.SeedSequence(
            entropy=self.seed & _U64,
            spawn_key=(tag, self.layer, self.fold, self.replicate),
        )
        return np.random.default_rng(ss)

    def child(self, purpose: str, **ids) -> "RngStream":
        """Derived stream with a new purpose tag; ids default to this stream's."""
        return replace(self, purpose=purpose, **ids)


def derive_seed(seed: int, *parts) -> int:
    """Fold strings/ints into `seed` to obtain a new independent 63-bit seed."""
    h = zlib.crc32(repr(parts).encode("utf-8"))
    ss = np.random.SeedSequence(entropy=seed & _U64, spawn_key=(h,))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


# ---------------------------------------------------------------------------
# Layer data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerData:
    """One layer's observed edges: canonical (E, 2) pairs and their values.

    The constructor canonicalizes, lexsorts, and freezes the arrays, and
    rejects duplicates, self-loops, and out-of-range nodes. Values for
    Bernoulli layers are validated by MultilayerDataset.
    """

    n: int
    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError("layer needs at least two nodes")
        e = canonical_edges(self.edges)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != e.shape[0]:
            raise InvalidInputError("values must align with edges")
        if e.size and e.max() >= self.n:
            raise InvalidInputError("node index out of range")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("edge values must be finite")
        e, v = _lexsort_edges(e, v)
        if e.shape[0] and np.any(np.diff(edge_keys(e, self.n)) == 0):
            raise InvalidInputError("duplicate edges")
        e.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def mask_matrix(self) -> np.ndarray:
        """Symmetric boolean (n, n) observation mask, False on the diagonal."""
        m = np.zeros((self.n, self.n), dtype=bool)
        m[self.edges[:, 0], self.edges[:, 1]] = True
        m[self.edges[:, 1], self.edges[:, 0]] = True
        return m

    def value_matrix(self) -> np.ndarray:
        """Symmetric (n, n) value matrix, zero where unobserved."""
        a = np.zeros((self.n, self.n), dtype=float)
        a[self.edges[:, 0], self.edges[:, 1]] = self.values
        a[self.edges[:, 1], self.edges[:, 0]] = self.values
        return a

    def subset(self, keep: np.ndarray) -> "LayerData":
        """Layer restricted to a boolean mask or index array over edges."""
        return LayerData(self.n, self.edges[keep], self.values[keep])

    def missing_pairs(self) -> np.ndarray:
        """Canonical pairs of this layer with no observed value."""
        return edge_difference(all_pairs(self.n), self.edges, self.n)


@dataclass(frozen=True)
class MultilayerDataset:
    """R layers over n shared nodes; layer 0 is the target network."""

    layers: tuple[LayerData, ...]
    families: tuple[EdgeFamily, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        families = tuple(self.families)
        if len(layers) < 1:
            raise InvalidInputError("need at least one layer")
        if len(families) != len(layers):
            raise InvalidInputError("one family per layer required")
        n = layers[0].n
        for r, (layer, fam) in enumerate(zip(layers, families)):
            if layer.n != n:
                raise InvalidInputError(f"layer {r} has node count {layer.n} != {n}")
            if fam is EdgeFamily.BERNOULLI_LOGISTIC and layer.edge_count:
                v = layer.values
                if not np.all((v == 0.0) | (v == 1.0)):
                    raise InvalidInputError(f"layer {r}: Bernoulli values must be 0/1")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "families", families)

    @property
    def n(self) -> int:
        return self.layers[0].n

    @property
    def R(self) -> int:
        return len(self.layers)

    @property
    def target(self) -> LayerData:
        return self.layers[0]


# ---------------------------------------------------------------------------
# Masking
# ---------------------------------------------------------------------------

def mask_edges(pairs: np.ndarray, rate: float, rng: RngStream):
    """Uniform random partition of canonical pairs into (observed, missing).

    |missing| = round(rate * |pairs|). Deterministic given the stream.
    """
    pairs = canonical_edges(pairs)
    if pairs.shape[0] == 0:
        raise InvalidInputError("cannot mask an empty edge set")
    if not (0.0 < rate < 1.0):
        raise InvalidInputError("missing rate must be in (0, 1)")
    n_missing = int(round(rate * pairs.shape[0]))
    perm = rng.generator().permutation(pairs.shape[0])
    miss_idx = np.zeros(pairs.shape[0], dtype=bool)
    miss_idx[perm[:n_missing]] = True
    return pairs[~miss_idx], pairs[miss_idx]
