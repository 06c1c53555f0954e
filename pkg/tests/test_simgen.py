import numpy as np
import pytest
from scipy.special import ndtr

from netma.core import EdgeFamily, InvalidInputError
from netma.simgen import (
    Example,
    SimScenario,
    gen_example1,
    gen_example2,
    gen_example3,
    gen_example4,
    gen_example5,
    generate,
    generate_full,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

GAUSS = EdgeFamily.GAUSSIAN_IDENTITY
BERN = EdgeFamily.BERNOULLII = EdgeFamily.BERNOULLI_LOGISTIC


class TestScenario:
    def test_example_constraints(self):
        s3 = SimScenario(example=Example.EX3, n=100, R=99, seed=1)
        assert s3.R == 7 and s3.family is GAUSS and s3.dims == (2,) * 7
        s4 = SimScenario(example=Example.EX4, n=100, seed=1)
        assert s4.R == 3
        s5 = SimScenario(example=Example.EX5, n=100, R=4, seed=1)
        assert s5.family is EdgeFamily.BERNOULLI_LOGISTIC

    def test_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            SimScenario(example=Example.EX1, n=100, R=1, seed=0)
        with pytest.raises(InvalidInputError):
            SimScenario(example=Example.EX1, n=100, R=4, sigma=-1.0, seed=0)
        with pytest.raises(InvalidInputError):
            SimScenario(example=Example.EX1, n=100, R=4, missing_rate=1.5, seed=0)
        with pytest.raises(InvalidInputError):
            SimScenario(example=Example.EX2, n=100, R=4, dims=(3, 1), seed=0)

    def test_file_roundtrip(self, tmp_path):
        s = SimScenario(example=Example.EX2, family=GAUSS, n=80, R=4,
                        dims=(3, 1, 2, 4), sigma=3.0, missing_rate=0.25, seed=42)
        path = tmp_path / "scenario.json"
        save_scenario(path, s)
        assert load_scenario(path) == s

    def test_dict_roundtrip(self):
        s = SimScenario(example=Example.EX1, family=BERN, n=50, R=3, sigma=1.0, seed=9)
        assert scenario_from_dict(scenario_to_dict(s)) == s


class TestExample1:
    def test_baseline_shapes_and_masking(self):
        dataset, truth = gen_example1(n=60, R=4, sigma=3.0, family=GAUSS, seed=5)
        assert dataset.R == 4 and dataset.n == 60
        total = 60 * 59 // 2
        for layer in dataset.layers:
            assert layer.edge_count + layer.missing_pairs().shape[0] == total
            assert layer.edge_count == total - round(0.25 * total)

    def test_determinism(self):
        a = gen_example1(n=40, R=3, sigma=2.0, family=GAUSS, seed=11)
        b = gen_example1(n=40, R=3, sigma=2.0, family=GAUSS, seed=11)
        for la, lb in zip(a[0].layers, b[0].layers):
            assert np.array_equal(la.edges, lb.edges)
            assert np.array_equal(la.values, lb.values)
        for ta, tb in zip(a[1].theta_star, b[1].theta_star):
            assert np.array_equal(ta, tb)

    def test_latent_normalization(self):
        _, truth = gen_example1(n=80, R=3, sigma=3.0, family=GAUSS, seed=2)
        for p in truth.params_star:
            gram = p.U.T @ p.U
            assert np.allclose(gram, 80 * np.eye(p.d), atol=1e-8)
            assert np.max(np.abs(p.U.mean(axis=0))) <= 1e-12

    def test_parameter_ranges(self):
        _, truth = gen_example1(n=60, R=4, sigma=3.0, family=GAUSS, seed=3)
        for p in truth.params_star:
            assert np.all((p.alpha >= -2.0) & (p.alpha <= -1.0))
            assert np.all((p.lam >= -1.0) & (p.lam <= -0.5))

    def test_sigma_zero_shares_latents(self):
        _, truth = gen_example1(n=50, R=4, sigma=0.0, family=GAUSS, seed=7)
        for r in range(1, 4):
            assert np.array_equal(truth.params_star[r].U, truth.params_star[0].U)

    def test_sigma_zero_means_agree_when_alpha_lambda_shared(self):
        _, truth = gen_example1(n=50, R=3, sigma=0.0, family=GAUSS, seed=8)
        p0, p1 = truth.params_star[0], truth.params_star[1]
        from netma.lsm import LsmParams
        rebuilt = LsmParams(alpha=p0.alpha, U=p1.U, lam=p0.lam)
        assert np.allclose(rebuilt.theta_matrix(), truth.theta_star[0], atol=1e-12)

    def test_mean_star_is_link_of_theta(self):
        _, truth_g = gen_example1(n=40, R=2, sigma=1.0, family=GAUSS, seed=4)
        assert np.array_equal(truth_g.mean_star[0], truth_g.theta_star[0])
        _, truth_b = gen_example1(n=40, R=2, sigma=1.0, family=BERN, seed=4)
        expect = 1.0 / (1.0 + np.exp(-truth_b.theta_star[0]))
        assert np.allclose(truth_b.mean_star[0], expect, atol=1e-12)

    def test_binary_values_for_logistic(self):
        dataset, _ = gen_example1(n=40, R=2, sigma=1.0, family=BERN, seed=4)
        for layer in dataset.layers:
            assert set(np.unique(layer.values)).issubset({0.0, 1.0})

    def test_value_symmetry_single_draw(self):
        dataset, _ = gen_example1(n=30, R=2, sigma=1.0, family=GAUSS, seed=6)
        vm = dataset.target.value_matrix()
        assert np.array_equal(vm, vm.T)


class TestExample2:
    def test_default_dims(self):
        dataset, truth = gen_example2(n=50, R=4, dims=(3, 1, 2, 4), seed=1)
        assert tuple(p.d for p in truth.params_star) == (3, 1, 2, 4)

    def test_theta_rank_bounded(self):
        _, truth = gen_example2(n=60, R=4, dims=(3, 1, 2, 4), seed=2)
        for p, theta in zip(truth.params_star, truth.theta_star):
            s = np.linalg.svd(theta, compute_uv=False)
            assert s[p.d + 2] <= 1e-8 * s[0]

    def test_degenerate_matches_shared_construction(self):
        # same dims, zero perturbation: latents coincide with the target's
        sc = SimScenario(example=Example.EX2, family=GAUSS, n=50, R=3,
                         dims=(3, 3, 3), sigma=0.0, seed=5)
        _, truth = generate(sc)
        for r in (1, 2):
            assert np.array_equal(truth.params_star[r].U, truth.params_star[0].U)


class TestExample3:
    def test_offsets(self):
        n = 200
        _, truth = gen_example3(n=n, seed=3)
        d21 = truth.theta_star[1] - truth.theta_star[0]
        assert d21.std() <= 1e-12  # constant offset matrix
        assert d21.mean() == pytest.approx(5.0 / n ** 0.6, rel=1e-12)
        assert 5.0 / n ** 0.6 == pytest.approx(0.2081, abs=2e-4)
        d41 = truth.theta_star[3] - truth.theta_star[0]
        assert d41.mean() == pytest.approx(5.0 / n ** 0.3, rel=1e-12)
        d61 = truth.theta_star[5] - truth.theta_star[0]
        assert d61.mean() == pytest.approx(5.0, rel=1e-12)

    def test_target_construction(self):
        _, truth = gen_example3(n=100, seed=4)
        p = truth.params_star[0]
        assert np.all(p.alpha == 0.0)
        assert np.array_equal(p.lam, [-1.0, -1.0])

    def test_n_sweep_supported(self):
        for n in (200, 300, 400):
            dataset, _ = gen_example3(n=n, seed=1)
            assert dataset.n == n


class TestExample4:
    def test_half_mix_recovers_target(self):
        _, truth = gen_example4(n=80, seed=5)
        mix = 0.5 * (truth.mean_star[1] + truth.mean_star[2])
        assert np.allclose(mix, truth.theta_star[0], atol=1e-12)

    def test_individual_bias_is_five(self):
        _, truth = gen_example4(n=80, seed=6)
        assert np.allclose(truth.mean_star[1] - truth.mean_star[0], 5.0, atol=1e-12)
        assert np.allclose(truth.mean_star[2] - truth.mean_star[0], -5.0, atol=1e-12)


class TestExample5:
    def test_probit_truth(self):
        dataset, truth = gen_example5(n=50, R=3, sigma=3.0, seed=7)
        assert np.allclose(truth.mean_star[0], ndtr(truth.theta_star[0]), atol=1e-12)
        for layer in dataset.layers:
            assert set(np.unique(layer.values)).issubset({0.0, 1.0})

    def test_zero_theta_probability_half(self):
        assert ndtr(0.0) == 0.5

    def test_sampler_calibration(self):
        # across replicates with varying parameters, the centered edge
        # indicators behave like centered Bernoulli(p_t) draws
        draws, probs = [], []
        for rep in range(2000):
            sc = SimScenario(example=Example.EX5, n=6, R=2, sigma=1.0,
                             missing_rate=0.4, seed=90000 + rep)
            dataset, truth = generate(sc)
            layer = dataset.target
            i, j = layer.edges[0]
            draws.append(layer.values[0])
            probs.append(truth.mean_star[0][i, j])
        draws, probs = np.array(draws), np.array(probs)
        slack = 3.0 * np.sqrt(np.sum(probs * (1 - probs)))
        assert abs(np.sum(draws - probs)) <= slack


class TestHoldout:
    def test_holdout_complements_observed(self):
        sc = SimScenario(example=Example.EX1, family=GAUSS, n=30, R=2, sigma=1.0, seed=3)
        dataset, truth, holdouts = generate_full(sc)
        for layer, (edges, values) in zip(dataset.layers, holdouts):
            assert edges.shape[0] == layer.missing_pairs().shape[0]
            assert np.array_equal(edges, layer.missing_pairs())
            assert values.shape[0] == edges.shape[0]
