# netma/simgen.py
# Synthetic multilayer datasets with known ground-truth means, covering five
# generation schemes: latent perturbation across layers, mixed latent
# dimensions, constant natural-parameter offsets with two decay rates, the
# +5/-5 pair whose 1:1 mix recovers the target, and a probit DGP fitted with
# the logistic working model.

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .core import (
    EdgeFamily,
    InvalidInputError,
    LayerData,
    MultilayerDataset,
    RngStream,
    all_pairs,
    b_prime,
    mask_edges,
)
from .lsm import LsmParams

GAUSSIAN_NOISE_VAR = 20.0  # Normal(0, 20) read as variance 20


class Example(Enum):
    EX1 = "ex1"
    EX2 = "ex2"
    EX3 = "ex3"
    EX4 = "ex4"
    EX5 = "ex5"


@dataclass(frozen=True)
class SimScenario:
    """Declarative description of one synthetic setup.

    sigma is the half-width of the uniform latent perturbation (ex1/ex2/ex5);
    dims are per-layer true latent dimensions. Fields that an example fixes
    (e.g. ex3 forces R=7, Gaussian) are validated here.
    """

    example: Example
    family: EdgeFamily = EdgeFamily.GAUSSIAN_IDENTITY
    n: int = 200
    R: int = 4
    sigma: float = 3.0
    dims: tuple[int, ...] | None = None
    missing_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise InvalidInputError("n too small")
        if not (0.0 < self.missing_rate < 1.0):
            raise InvalidInputError("missing_rate must be in (0, 1)")
        ex = self.example
        if ex in (Example.EX1, Example.EX5):
            if self.R < 2:
                raise InvalidInputError("need R >= 2")
            if self.sigma < 0:
                raise InvalidInputError("sigma must be >= 0")
            object.__setattr__(self, "dims", tuple([2] * self.R))
        elif ex is Example.EX2:
            dims = self.dims if self.dims is not None else (3, 1, 2, 4)
            if len(dims) != self.R:
                raise InvalidInputError("dims must give one latent dimension per layer")
            if min(dims) < 1:
                raise InvalidInputError("latent dimensions must be >= 1")
            object.__setattr__(self, "dims", tuple(dims))
        elif ex is Example.EX3:
            object.__setattr__(self, "R", 7)
            object.__setattr__(self, "family", EdgeFamily.GAUSSIAN_IDENTITY)
            object.__setattr__(self, "dims", (2,) * 7)
        elif ex is Example.EX4:
            object.__setattr__(self, "R", 3)
            object.__setattr__(self, "family", EdgeFamily.GAUSSIAN_IDENTITY)
            object.__setattr__(self, "dims", (2,) * 3)
        if ex is Example.EX5:
            # edges are binary; the working family is logistic
            object.__setattr__(self, "family", EdgeFamily.BERNOULLI_LOGISTIC)


@dataclass(frozen=True)
class GroundTruth:
    """True per-layer natural parameters, DGP means, and latent parameters.

    mean_star is the data-generating mean: the family's mean link for
    ex1-ex4, the probit mean for ex5 (where the working model is
    deliberately misspecified).
    """

    theta_star: tuple[np.ndarray, ...]
    mean_star: tuple[np.ndarray, ...]
    params_star: tuple[LsmParams, ...]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def _center_and_normalize(U_tilde: np.ndarray) -> np.ndarray:
    """Column-center, then rescale so U'U = n I (symmetric orthogonalization)."""
    U = U_tilde - U_tilde.mean(axis=0, keepdims=True)
    G = U.T @ U
    w, V = np.linalg.eigh(G)
    if w.min() <= 0:
        raise InvalidInputError("degenerate latent draw; increase n")
    U = U @ (V * (1.0 / np.sqrt(w))) @ V.T
    return U * np.sqrt(U.shape[0])


def _theta_of(alpha, U, lam):
    return alpha[:, None] + alpha[None, :] + (U * lam) @ U.T


def _sample_layer(theta, mean, scenario, r):
    """Draw one symmetric layer from its DGP mean and mask missing pairs."""
    n = scenario.n
    pairs = all_pairs(n)
    iu, ju = pairs[:, 0], pairs[:, 1]
    gen = RngStream(scenario.seed, "edges", layer=r).generator()
    if scenario.example is Example.EX5:
        values = (gen.uniform(size=pairs.shape[0]) < mean[iu, ju]).astype(float)
    elif scenario.family is EdgeFamily.BERNOULLI_LOGISTIC:
        values = (gen.uniform(size=pairs.shape[0]) < mean[iu, ju]).astype(float)
    else:
        values = theta[iu, ju] + gen.normal(0.0, np.sqrt(GAUSSIAN_NOISE_VAR), size=pairs.shape[0])
    observed, missing = mask_edges(pairs, scenario.missing_rate,
                                   RngStream(scenario.seed, "mask", layer=r))
    keys = iu * n + ju  # ascending because pairs are lexsorted
    obs_values = values[np.searchsorted(keys, observed[:, 0] * n + observed[:, 1])]
    held_values = values[np.searchsorted(keys, missing[:, 0] * n + missing[:, 1])]
    layer = LayerData(n=n, edges=observed, values=obs_values)
    return layer, (missing, held_values)


def _mean_of(theta, scenario):
    if scenario.example is Example.EX5:
        return ndtr(theta)
    return b_prime(scenario.family, theta)


def _perturbed_latents(scenario: SimScenario):
    """Latent parameter draws for ex1/ex2/ex5 (target + perturbed layers)."""
    n, R = scenario.n, scenario.R
    d1 = scenario.dims[0]
    base = RngStream(scenario.seed, "latent-base").generator()
    U1_tilde = base.normal(size=(n, d1))
    params = []
    for r in range(R):
        d_r = scenario.dims[r]
        gen = RngStream(scenario.seed, "latent-noise", layer=r).generator()
        if r == 0:
            U_tilde = U1_tilde
        elif scenario.example is Example.EX2:
            shared = min(d_r, d1)
            U_tilde = np.empty((n, d_r))
            U_tilde[:, :shared] = U1_tilde[:, :shared] + gen.uniform(-scenario.sigma, scenario.sigma,
                                                                     size=(n, shared))
            if d_r > shared:
                U_tilde[:, shared:] = gen.normal(size=(n, d_r - shared))
        else:
            U_tilde = U1_tilde + gen.uniform(-scenario.sigma, scenario.sigma, size=(n, d_r))
        U = _center_and_normalize(U_tilde)
        ag = RngStream(scenario.seed, "alpha", layer=r).generator()
        lg = RngStream(scenario.seed, "lambda", layer=r).generator()
        alpha = ag.uniform(-2.0, -1.0, size=n)
        lam = lg.uniform(-1.0, -0.5, size=d_r)
        params.append(LsmParams(alpha=alpha, U=U, lam=lam))
    return params


def _assemble(scenario: SimScenario, params: list[LsmParams],
              thetas: list[np.ndarray] | None = None):
    thetas = thetas if thetas is not None else [_theta_of(p.alpha, p.U, p.lam) for p in params]
    means = [_mean_of(t, scenario) for t in thetas]
    layers, holdouts = [], []
    for r in range(scenario.R):
        layer, held = _sample_layer(thetas[r], means[r], scenario, r)
        layers.append(layer)
        holdouts.append(held)
    dataset = MultilayerDataset(layers=tuple(layers),
                                families=(scenario.family,) * scenario.R)
    truth = GroundTruth(theta_star=tuple(thetas), mean_star=tuple(means),
                        params_star=tuple(params))
    return dataset, truth, holdouts


def generate_full(scenario: SimScenario):
    """Generate (dataset, truth, holdouts); holdouts[r] = (edges, values)."""
    ex = scenario.example
    if ex in (Example.EX1, Example.EX2, Example.EX5):
        params = _perturbed_latents(scenario)
        return _assemble(scenario, params)

    # ex3/ex4: target has alpha = 0, Lambda = -I; other layers add constants
    n = scenario.n
    base = RngStream(scenario.seed, "latent-base").generator()
    U1 = _center_and_normalize(base.normal(size=(n, 2)))
    alpha1 = np.zeros(n)
    lam1 = np.full(2, -1.0)
    theta1 = _theta_of(alpha1, U1, lam1)
    if ex is Example.EX3:
        offsets = [0.0,
                   5.0 / n ** 0.6, 5.0 / n ** 0.6,
                   5.0 / n ** 0.3, 5.0 / n ** 0.3,
                   5.0, 5.0]
    else:
        offsets = [0.0, 5.0, -5.0]
    params, thetas = [], []
    for off in offsets:
        # a constant offset c is alpha_i = c/2 for every node
        params.append(LsmParams(alpha=alpha1 + off / 2.0, U=U1, lam=lam1))
        thetas.append(theta1 + off)
    return _assemble(scenario, params, thetas)


def generate(scenario: SimScenario):
    """Generate (MultilayerDataset, GroundTruth) for a scenario."""
    dataset, truth, _ = generate_full(scenario)
    return dataset, truth


def gen_example1(n: int, R: int, sigma: float, family: EdgeFamily, seed: int):
    return generate(SimScenario(example=Example.EX1, family=family, n=n, R=R,
                                sigma=sigma, seed=seed))


def gen_example2(n: int, R: int, dims: tuple[int, ...], seed: int,
                 family: EdgeFamily = EdgeFamily.GAUSSIAN_IDENTITY):
    return generate(SimScenario(example=Example.EX2, family=family, n=n, R=R,
                                dims=tuple(dims), seed=seed))


def gen_example3(n: int, seed: int):
    return generate(SimScenario(example=Example.EX3, n=n, seed=seed))


def gen_example4(n: int, seed: int):
    return generate(SimScenario(example=Example.EX4, n=n, seed=seed))


def gen_example5(n: int, R: int, sigma: float, seed: int):
    return generate(SimScenario(example=Example.EX5, n=n, R=R, sigma=sigma, seed=seed))


# ---------------------------------------------------------------------------
# Scenario files (flat JSON key-value)
# ---------------------------------------------------------------------------

def scenario_to_dict(s: SimScenario) -> dict:
    d = asdict(s)
    d["example"] = s.example.value
    d["family"] = s.family.value
    d["dims"] = list(s.dims) if s.dims is not None else None
    return d


def scenario_from_dict(d: dict) -> SimScenario:
    try:
        return SimScenario(
            example=Example(d["example"]),
            family=EdgeFamily(d.get("family", "gaussian")),
            n=int(d.get("n", 200)),
            R=int(d.get("R", 4)),
            sigma=float(d.get("sigma", 3.0)),
            dims=tuple(d["dims"]) if d.get("dims") else None,
            missing_rate=float(d.get("missing_rate", 0.25)),
            seed=int(d.get("seed", 0)),
        )
    except (KeyError, ValueError) as err:
        raise InvalidInputError(f"bad scenario file: {err}") from err


def save_scenario(path, s: SimScenario):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> SimScenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
