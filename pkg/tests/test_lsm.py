import dataclasses

import numpy as np
import pytest

from netma.core import EdgeFamily, InvalidInputError, LayerData, NumericalFailure, RngStream, nll_edge
from netma.lsm import (
    FitOptions,
    InitScheme,
    LsmParams,
    armijo_minimize,
    fit,
    gradient,
    nll,
    predict_means,
)
from netma.simgen import Example, SimScenario, generate

GAUSS = EdgeFamily.GAUSSIAN_IDENTITY
BERN = EdgeFamily.BERNOULLI_LOGISTIC


def random_instance(n, d, family, seed, density=1.0):
    gen = np.random.default_rng(seed)
    alpha = gen.normal(0, 0.5, n)
    U = gen.normal(0, 0.7, (n, d))
    lam = gen.normal(0, 1.0, d)
    params = LsmParams(alpha=alpha, U=U, lam=lam)
    iu, ju = np.triu_indices(n, k=1)
    keep = gen.uniform(size=iu.size) < density
    edges = np.column_stack([iu[keep], ju[keep]])
    theta = params.theta_matrix()[edges[:, 0], edges[:, 1]]
    if family is GAUSS:
        values = theta + gen.normal(0, 1.0, edges.shape[0])
    else:
        values = (gen.uniform(size=edges.shape[0]) < 1 / (1 + np.exp(-theta))).astype(float)
    return params, LayerData(n=n, edges=edges, values=values)


def flatten_params(params):
    return np.concatenate([params.alpha, params.U.ravel(), params.lam])


def unflatten(vec, n, d):
    return LsmParams(alpha=vec[:n], U=vec[n:n + n * d].reshape(n, d), lam=vec[n + n * d:])


class TestNll:
    def test_zero_params_bernoulli(self):
        params, layer = random_instance(8, 2, BERN, 0)
        zero = LsmParams(alpha=np.zeros(8), U=np.zeros((8, 2)), lam=np.zeros(2))
        assert nll(zero, layer, BERN) == pytest.approx(layer.edge_count * np.log(2.0), rel=1e-14)

    def test_zero_params_gaussian_zero_data(self):
        layer = LayerData(n=5, edges=[[0, 1], [2, 3]], values=[0.0, 0.0])
        zero = LsmParams(alpha=np.zeros(5), U=np.zeros((5, 1)), lam=np.zeros(1))
        assert nll(zero, layer, GAUSS) == 0.0

    @pytest.mark.parametrize("family", [GAUSS, BERN])
    def test_matches_per_edge_summation_oracle(self, family):
        params, layer = random_instance(6, 1, family, 3)
        theta = params.theta_matrix()
        expected = sum(
            float(nll_edge(family, a, theta[i, j]))
            for (i, j), a in zip(layer.edges, layer.values)
        )
        assert nll(params, layer, family) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        params, _ = random_instance(6, 1, GAUSS, 3)
        other = LayerData(n=7, edges=[[0, 1]], values=[1.0])
        with pytest.raises(InvalidInputError):
            nll(params, other, GAUSS)


class TestGradient:
    @pytest.mark.parametrize("family", [GAUSS, BERN])
    def test_finite_differences(self, family):
        params, layer = random_instance(8, 2, family, 11, density=0.8)
        g_alpha, g_U, g_lam = gradient(params, layer, family)
        analytic = np.concatenate([g_alpha, g_U.ravel(), g_lam])
        x0 = flatten_params(params)
        h = 1e-5
        fd = np.empty_like(x0)
        for i in range(x0.size):
            xp, xm = x0.copy(), x0.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (nll(unflatten(xp, 8, 2), layer, family)
                     - nll(unflatten(xm, 8, 2), layer, family)) / (2 * h)
        scale = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(analytic - fd) / scale) <= 1e-4

    def test_zero_residual_gaussian(self):
        params, layer = random_instance(7, 2, GAUSS, 5)
        theta = params.theta_matrix()
        exact = LayerData(n=7, edges=layer.edges,
                          values=theta[layer.edges[:, 0], layer.edges[:, 1]])
        g_alpha, g_U, g_lam = gradient(params, exact, GAUSS)
        assert np.max(np.abs(g_alpha)) == 0.0
        assert np.max(np.abs(g_U)) == 0.0
        assert np.max(np.abs(g_lam)) == 0.0

    def test_near_zero_at_converged_fit(self):
        _, layer = random_instance(30, 1, GAUSS, 8)
        zero = LsmParams(alpha=np.zeros(30), U=np.full((30, 1), 0.01), lam=np.zeros(1))
        g0 = gradient(zero, layer, GAUSS)
        scale0 = max(float(np.max(np.abs(g))) for g in g0)
        opts = FitOptions(rel_tol=1e-13, max_iters=30000, rng=RngStream(0, "fit"))
        fitted = fit(layer, GAUSS, 1, opts)
        g_alpha, _, g_lam = gradient(fitted, layer, GAUSS)
        # alpha and lam are unconstrained coordinates; near-zero at a minimum
        assert np.max(np.abs(g_alpha)) <= 1e-4 * scale0
        assert np.max(np.abs(g_lam)) <= 1e-4 * scale0


class TestArmijo:
    def test_monotone_accepted_steps(self):
        _, layer = random_instance(15, 2, GAUSS, 21)
        history = []
        opts = FitOptions(rng=RngStream(4, "fit"))
        # drive the same objective fit() uses, recording accepted values
        from netma.lsm import _random_init, edge_objective

        alpha0, U0, lam0 = _random_init(15, 2, opts.rng)
        iu, ju = layer.edges[:, 0], layer.edges[:, 1]

        def fun(x):
            a, U, lam = x
            theta = a[iu] + a[ju] + np.einsum("ed,ed->e", U[iu] * lam, U[ju])
            return float(np.sum(edge_objective(GAUSS, layer.values, theta)))

        def grad(x):
            p = LsmParams(alpha=x[0], U=x[1], lam=x[2])
            return list(gradient(p, layer, GAUSS))

        def project(g):
            return [g[0], g[1] - g[1].mean(axis=0, keepdims=True), g[2]]

        armijo_minimize([alpha0, U0, lam0], fun, grad, project, opts,
                        on_accept=history.append)
        diffs = np.diff(np.array(history))
        assert np.all(diffs <= 1e-12)

    def test_nonfinite_start_raises(self):
        opts = FitOptions(rng=RngStream(0, "x"))
        with pytest.raises(NumericalFailure):
            armijo_minimize([np.zeros(2)], lambda x: np.inf, lambda x: [np.zeros(2)],
                            lambda g: g, opts)


class TestFit:
    def test_centering(self):
        _, layer = random_instance(20, 2, GAUSS, 2)
        fitted = fit(layer, GAUSS, 2, FitOptions(rng=RngStream(1, "f")))
        assert np.max(np.abs(fitted.U.mean(axis=0))) <= 1e-10

    def test_determinism(self):
        _, layer = random_instance(15, 2, BERN, 3)
        opts = FitOptions(rng=RngStream(5, "fit", layer=1))
        a = fit(layer, BERN, 2, opts)
        b = fit(layer, BERN, 2, opts)
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.U, b.U)
        assert np.array_equal(a.lam, b.lam)

    def test_single_edge_bernoulli_pushes_up(self):
        layer = LayerData(n=4, edges=[[0, 1]], values=[1.0])
        fitted = fit(layer, BERN, 1, FitOptions(rng=RngStream(2, "f")))
        means = predict_means(fitted, BERN)
        assert means[0, 1] >= 0.5

    def test_records_metadata(self):
        _, layer = random_instance(10, 1, GAUSS, 4)
        fitted = fit(layer, GAUSS, 1, FitOptions(rng=RngStream(3, "f")))
        assert fitted.objective is not None and fitted.iterations >= 1

    def test_isolated_node_alpha_stays_zero(self):
        # node 5 has no incident observed edge
        layer = LayerData(n=6, edges=[[0, 1], [1, 2], [2, 3], [0, 4], [3, 4]],
                          values=[1.0, 0.0, 1.0, 1.0, 0.0])
        fitted = fit(layer, BERN, 1, FitOptions(rng=RngStream(6, "f")))
        assert fitted.alpha[5] == 0.0

    def test_spectral_warm_start(self):
        _, layer = random_instance(20, 2, GAUSS, 9)
        fitted = fit(layer, GAUSS, 2,
                     FitOptions(init=InitScheme.SPECTRAL_WARM_START))
        assert fitted.objective is not None
        assert np.max(np.abs(fitted.U.mean(axis=0))) <= 1e-10

    def test_errors(self):
        _, layer = random_instance(6, 1, GAUSS, 0)
        with pytest.raises(InvalidInputError):
            fit(layer, GAUSS, 0, FitOptions(rng=RngStream(0, "f")))
        empty = LayerData(n=4, edges=np.empty((0, 2), dtype=np.int64), values=[])
        with pytest.raises(InvalidInputError):
            fit(empty, GAUSS, 1, FitOptions(rng=RngStream(0, "f")))
        with pytest.raises(InvalidInputError):
            fit(layer, GAUSS, 1, FitOptions())  # random init without rng

    @pytest.mark.slow
    def test_recovery_improves_with_n(self):
        # median relative prediction error shrinks as n grows
        rels = {}
        for n in (100, 200, 400):
            errs = []
            for rep in range(10):
                sc = SimScenario(example=Example.EX1, family=GAUSS, n=n, R=2,
                                 sigma=0.0, seed=1000 + rep)
                dataset, truth = generate(sc)
                fitted = fit(dataset.target, GAUSS, 2,
                             FitOptions(rng=RngStream(rep, "fit", layer=0)))
                pred = predict_means(fitted, GAUSS)
                iu, ju = np.triu_indices(n, k=1)
                err = np.linalg.norm(pred[iu, ju] - truth.mean_star[0][iu, ju])
                errs.append(err / np.linalg.norm(truth.mean_star[0][iu, ju]))
            rels[n] = float(np.median(errs))
        assert rels[100] > rels[200] > rels[400]


class TestPredictMeans:
    def test_zero_params(self):
        zero = LsmParams(alpha=np.zeros(5), U=np.zeros((5, 2)), lam=np.zeros(2))
        mb = predict_means(zero, BERN)
        iu, ju = np.triu_indices(5, k=1)
        assert np.all(mb[iu, ju] == 0.5)
        mg = predict_means(zero, GAUSS)
        assert np.all(mg == 0.0)

    def test_symmetry(self):
        params, _ = random_instance(9, 3, GAUSS, 13)
        m = predict_means(params, GAUSS)
        assert np.array_equal(m, m.T)

    def test_invariance_under_signed_permutation(self):
        gen = np.random.default_rng(5)
        for _ in range(5):
            params, _ = random_instance(8, 3, BERN, int(gen.integers(1 << 30)))
            perm = gen.permutation(3)
            signs = gen.choice([-1.0, 1.0], size=3)
            Q = np.zeros((3, 3))
            Q[np.arange(3), perm] = signs
            # Q orthogonal; Q Lambda Q^T is a diagonal permutation
            U2 = params.U @ Q.T
            lam2 = (Q @ np.diag(params.lam) @ Q.T).diagonal()
            p2 = LsmParams(alpha=params.alpha, U=U2, lam=lam2)
            m1 = predict_means(params, BERN)
            m2 = predict_means(p2, BERN)
            assert np.max(np.abs(m1 - m2)) <= 1e-10
