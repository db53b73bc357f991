from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import chisquare

from dimple.errors import ConfigError, FormatError, InfeasibleModelError
from dimple.netgen import (
    DirichletFirstK,
    ModelConfig,
    MultinomialFirstK,
    TruncatedNormal,
    build_ground_truth,
    estimate_sparsity,
    latent_from_dict,
    probability_tensor,
    sample_adjacency,
    sample_labels,
    sample_latent,
    sample_loading,
)
from dimple.tensor_core import validate_adjacency


def constant_probability(n: int, L: int, value: float) -> np.ndarray:
    P = np.full((n, n, L), value)
    for l in range(L):
        np.fill_diagonal(P[:, :, l], 0.0)
    return P


class TestSampleLabels:
    def test_single_group(self, gen):
        assert np.all(sample_labels((1.0,), 50, gen) == 1)

    def test_balanced_counts(self, gen):
        counts = np.bincount(sample_labels((0.5, 0.5), 100_000, gen), minlength=3)[1:]
        assert all(48_500 <= c <= 51_500 for c in counts)

    def test_chi_square(self, gen):
        pi = (0.2, 0.3, 0.5)
        labels = sample_labels(pi, 100_000, gen)
        observed = np.bincount(labels, minlength=4)[1:]
        assert chisquare(observed, np.array(pi) * labels.size).pvalue > 1e-3

    def test_deterministic(self):
        a = sample_labels((0.3, 0.7), 200, np.random.default_rng(1))
        b = sample_labels((0.3, 0.7), 200, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("pi", [(0.5, 0.4), (1.2, -0.2), ()])
    def test_invalid(self, gen, pi):
        with pytest.raises(ConfigError):
            sample_labels(pi, 10, gen)


class TestSampleLatent:
    def test_truncated_normal_one_dim(self, gen):
        X = sample_latent(TruncatedNormal(), 500, 1, gen)
        np.testing.assert_allclose(np.abs(X), 1.0, atol=1e-15)

    def test_truncated_normal_unit_rows(self, gen):
        X = sample_latent(TruncatedNormal(sigma=3.0), 1000, 4, gen)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)

    def test_truncated_normal_covariance(self, gen):
        cov = np.array([[1.0, 0.5], [0.5, 2.0]])
        X = sample_latent(TruncatedNormal(covariance=cov), 200, 2, gen)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)
        with pytest.raises(ConfigError):
            sample_latent(TruncatedNormal(covariance=cov), 10, 3, gen)

    def test_multinomial_indicator_rows(self, gen):
        X = sample_latent(MultinomialFirstK(), 1000, 3, gen)
        assert set(np.unique(X)) <= {0.0, 1.0}
        assert X.sum(axis=1).max() <= 1.0
        # the (K+1)-th outcome leaves an all-zero row
        assert (X.sum(axis=1) == 0).any()

    def test_dirichlet_rows(self, gen):
        X = sample_latent(DirichletFirstK(alpha=0.5), 1000, 3, gen)
        assert X.min() >= 0.0
        assert X.sum(axis=1).max() <= 1.0 + 1e-12

    def test_dirichlet_mass_on_last_component(self, gen):
        X = sample_latent(DirichletFirstK(alpha=(0.01, 0.01, 0.01, 100.0)), 200, 3, gen)
        assert X.sum(axis=1).max() < 0.1

    @pytest.mark.parametrize("dist", [TruncatedNormal(), MultinomialFirstK(), DirichletFirstK()])
    def test_unit_ball_support(self, gen, dist):
        X = sample_latent(dist, 10_000, 3, gen)
        assert np.linalg.norm(X, axis=1).max() <= 1.0 + 1e-12

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            TruncatedNormal(sigma=0.0)
        with pytest.raises(ConfigError):
            DirichletFirstK(alpha=-1.0)
        with pytest.raises(ConfigError):
            MultinomialFirstK(weights=(0.5, 0.6))

    def test_from_dict(self):
        assert latent_from_dict({"name": "dirichlet", "alpha": [0.1, 0.2]}) == DirichletFirstK(alpha=(0.1, 0.2))
        assert latent_from_dict(TruncatedNormal(sigma=2.0).to_dict()) == TruncatedNormal(sigma=2.0)
        with pytest.raises(ConfigError):
            latent_from_dict({"name": "cauchy"})
        with pytest.raises(ConfigError):
            latent_from_dict({"name": "truncated_normal", "mu": 1.0})


class TestSampleLoading:
    def test_symmetric_and_in_range(self, gen):
        B = sample_loading(5, -0.2, 0.3, gen)
        np.testing.assert_array_equal(B, B.T)
        assert B.min() >= -0.2 and B.max() <= 0.3

    def test_two_by_two_layout(self):
        B = sample_loading(2, 0.0, 1.0, np.random.default_rng(9))
        u = np.random.default_rng(9).uniform(0.0, 1.0, size=3)
        np.testing.assert_array_equal(B, [[u[0], u[1]], [u[1], u[2]]])

    def test_degenerate_interval(self, gen):
        np.testing.assert_allclose(sample_loading(3, 0.1 - 1e-12, 0.1, gen), 0.1, atol=1e-11)
        np.testing.assert_array_equal(sample_loading(3, 0.2, 0.2, gen), 0.2)

    def test_off_diagonal_weight(self, gen):
        B = sample_loading(4, 0.1, 0.2, gen, omega=0.0)
        np.testing.assert_array_equal(B, np.diag(np.diag(B)))

    def test_mean(self, gen):
        c, d = -0.05, 0.15
        B = sample_loading(446, c, d, gen)
        values = B[np.triu_indices(446)]
        sigma = (d - c) / np.sqrt(12 * values.size)
        assert abs(values.mean() - (c + d) / 2) <= 3 * sigma

    def test_reversed_interval(self, gen):
        with pytest.raises(ConfigError):
            sample_loading(2, 0.3, 0.1, gen)


class TestProbabilityTensor:
    def test_two_node_example(self):
        P = probability_tensor(np.array([1]), [np.array([[1.0], [0.0]])], [np.array([[0.4]])])
        np.testing.assert_array_equal(P[:, :, 0], np.zeros((2, 2)))

    def test_outer_product(self):
        x = np.array([[0.5], [-1.0], [0.25]])
        P = probability_tensor(np.array([1]), [x], [np.array([[0.8]])])
        for i in range(3):
            for j in range(3):
                expected = 0.0 if i == j else 0.8 * x[i, 0] * x[j, 0]
                assert P[i, j, 0] == pytest.approx(expected, abs=1e-15)

    def test_overflow_is_an_error(self):
        x = np.ones((3, 1))
        with pytest.raises(InfeasibleModelError):
            probability_tensor(np.array([1]), [x], [np.array([[1.5]])])


class TestModelConfig:
    def test_defaults(self):
        config = ModelConfig.uniform(20, 10, 3, 2)
        assert config.M == 3
        assert config.K == (2, 2, 2)
        assert config.pi == pytest.approx((1 / 3,) * 3)

    def test_scalar_k(self):
        assert ModelConfig(n=10, L=5, K=4).K == (4,)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"K": (0, 2)},
            {"K": (2, 2), "pi": (0.5,)},
            {"K": (2,), "b_range": (0.2, 0.1)},
            {"K": (2,), "n": 1},
        ],
    )
    def test_invalid(self, kwargs):
        base = {"n": 10, "L": 5}
        with pytest.raises(ConfigError):
            ModelConfig(**{**base, **kwargs})


class TestBuildGroundTruth:
    def test_slices_match_factorization(self, small_truth):
        gt = small_truth
        for l in range(gt.L):
            x = gt.X[gt.labels[l] - 1]
            expected = x @ gt.B[l] @ x.T
            np.fill_diagonal(expected, 0.0)
            np.testing.assert_allclose(gt.P[:, :, l], expected, atol=1e-12)
        assert all(np.linalg.norm(x, axis=1).max() <= 1 + 1e-12 for x in gt.X)
        assert set(np.unique(gt.labels)) <= {1, 2, 3}

    def test_zero_loadings(self):
        gt = build_ground_truth(ModelConfig.uniform(30, 6, 2, 2, b_range=(0.0, 0.0), seed=3))
        assert not gt.P.any()

    def test_infeasible_range(self):
        with pytest.raises(InfeasibleModelError):
            build_ground_truth(ModelConfig.uniform(10, 4, 1, 1, b_range=(2.0, 3.0)))

    def test_deterministic(self):
        config = ModelConfig.uniform(40, 12, 2, 2, seed=11)
        a, b = build_ground_truth(config), build_ground_truth(config)
        np.testing.assert_array_equal(a.P, b.P)
        np.testing.assert_array_equal(a.labels, b.labels)
        c = build_ground_truth(config, seed=12)
        assert not np.array_equal(a.P, c.P)

    def test_centered_signal_columns_sum_to_zero(self, small_truth):
        S = small_truth.centered_signal()
        np.testing.assert_allclose(S.sum(axis=0), 0.0, atol=1e-10)


class TestSampleAdjacency:
    def test_zero_probability(self):
        assert not sample_adjacency(np.zeros((5, 5, 2)), 0).any()

    def test_certain_negative_edges(self):
        A = sample_adjacency(constant_probability(6, 3, -1.0), 4)
        for l in range(3):
            np.testing.assert_array_equal(A[:, :, l], -(np.ones((6, 6)) - np.eye(6)))

    def test_density(self):
        A = sample_adjacency(constant_probability(200, 50, 0.3), 17)
        pairs = 200 * 199 / 2 * 50
        assert abs(estimate_sparsity(A) - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / pairs)

    def test_valid_and_deterministic(self, small_truth):
        A = sample_adjacency(small_truth.P, 5)
        assert A.dtype == np.int8
        validate_adjacency(A)
        np.testing.assert_array_equal(A, sample_adjacency(small_truth.P, 5))
        assert np.all(A * np.sign(small_truth.P) >= 0)

    def test_edge_frequencies_match_probabilities(self, gen):
        n = 30
        upper = np.triu(gen.uniform(-1.0, 1.0, (n, n)), k=1)
        P = (upper + upper.T)[:, :, None]
        draws = 400
        total = np.zeros((n, n))
        for seed in range(draws):
            A = sample_adjacency(P, seed)[:, :, 0]
            assert np.all(A * np.sign(P[:, :, 0]) >= 0)
            total += np.abs(A)
        freq = total / draws
        p = np.abs(P[:, :, 0])
        sigma = np.sqrt(p * (1 - p) / draws) + 1e-12
        assert np.all(np.abs(freq - p) <= 5 * sigma + 1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(FormatError):
            sample_adjacency(np.full((3, 3, 1), 1.2), 0)


class TestEstimateSparsity:
    def test_values(self):
        assert estimate_sparsity(np.zeros((4, 4, 2), dtype=np.int8)) == 0.0
        full = np.ones((4, 4, 2), dtype=np.int8)
        for l in range(2):
            np.fill_diagonal(full[:, :, l], 0)
        assert estimate_sparsity(full) == 1.0
        one = np.zeros((3, 3, 1), dtype=np.int8)
        one[0, 1, 0] = one[1, 0, 0] = 1
        assert estimate_sparsity(one) == pytest.approx(1 / 3)
