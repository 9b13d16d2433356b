import numpy as np
import pytest

from prunepose.dpc import (
    DpcConfig,
    delta_distance,
    local_density,
    pairwise_sq_dist,
    prune,
)

from dpc_oracle import oracle_scores


class TestPairwiseSqDist:
    def test_hand_example(self):
        d2 = pairwise_sq_dist(np.array([[0.0], [1.0], [3.0]]))
        assert np.array_equal(d2, [[0, 1, 9], [1, 0, 4], [9, 4, 0]])

    def test_single_token(self):
        assert np.array_equal(pairwise_sq_dist(np.array([[2.5]])), [[0.0]])

    def test_duplicates_give_zero_offdiagonal(self):
        x = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 0.0]])
        d2 = pairwise_sq_dist(x)
        assert d2[0, 1] == 0.0 and d2[1, 0] == 0.0

    def test_symmetric_zero_diagonal(self):
        x = np.random.default_rng(0).normal(size=(10, 4))
        d2 = pairwise_sq_dist(x)
        assert np.array_equal(d2, d2.T)
        assert np.all(np.diag(d2) == 0.0)

    def test_large_n_path_agrees_with_small(self):
        x = np.random.default_rng(1).normal(size=(600, 3))
        d2 = pairwise_sq_dist(x)
        sub = pairwise_sq_dist(x[:100])
        assert np.allclose(d2[:100, :100], sub, rtol=1e-9, atol=1e-9)


class TestLocalDensity:
    def test_hand_example(self):
        rho = local_density(np.array([[0.0], [1.0], [3.0]]), DpcConfig(k=1, tau=1.0))
        assert np.allclose(rho, [np.exp(-1), np.exp(-1), np.exp(-4)], rtol=1e-12)

    def test_identical_tokens(self):
        rho = local_density(np.array([[5.0, 5.0], [5.0, 5.0]]), DpcConfig(k=3, tau=2.0))
        assert np.array_equal(rho, [1.0, 1.0])

    def test_single_token(self):
        assert np.array_equal(local_density(np.array([[1.0, 2.0]]), DpcConfig()), [1.0])

    def test_in_unit_interval_property(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            x = rng.normal(size=(rng.integers(1, 20), rng.integers(1, 5)))
            rho = local_density(x, DpcConfig(k=int(rng.integers(1, 6))))
            assert np.all(rho > 0.0) and np.all(rho <= 1.0)


class TestDeltaDistance:
    def test_hand_example(self):
        x = np.array([[0.0], [1.0], [3.0]])
        rho = local_density(x, DpcConfig(k=1, tau=1.0))
        assert np.allclose(delta_distance(x, rho), [3.0, 1.0, 2.0], rtol=1e-12)

    def test_single_token(self):
        assert np.array_equal(delta_distance(np.array([[7.0]]), np.array([1.0])), [0.0])

    def test_identical_tokens(self):
        x = np.array([[1.0], [1.0]])
        delta = delta_distance(x, np.array([1.0, 1.0]))
        assert np.array_equal(delta, [0.0, 0.0])

    def test_nonnegative_property(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            x = rng.normal(size=(rng.integers(2, 20), 3))
            rho = local_density(x, DpcConfig())
            assert np.all(delta_distance(x, rho) >= 0.0)


class TestPrune:
    def test_hand_example(self):
        scores, sel = prune(np.array([[0.0], [1.0], [3.0]]), DpcConfig(k=1, tau=1.0, epsilon=3))
        assert np.allclose(scores.score, [3 * np.exp(-1), np.exp(-1), 2 * np.exp(-4)], rtol=1e-12)
        assert sel.kept.tolist() == [0]

    def test_epsilon_one_identity(self):
        x = np.random.default_rng(0).normal(size=(9, 2))
        _, sel = prune(x, DpcConfig(epsilon=1))
        assert sel.kept.tolist() == list(range(9))

    def test_default_token_budget(self):
        # three 16x12 frames pruned six-to-one
        x = np.random.default_rng(1).normal(size=(576, 4))
        _, sel = prune(x, DpcConfig(epsilon=6))
        assert len(sel.kept) == 96

    def test_fewer_tokens_than_ratio_keeps_one(self):
        x = np.random.default_rng(2).normal(size=(3, 2))
        _, sel = prune(x, DpcConfig(epsilon=10))
        assert len(sel.kept) == 1

    def test_score_is_product(self):
        x = np.random.default_rng(3).normal(size=(12, 3))
        scores, _ = prune(x, DpcConfig())
        assert np.array_equal(scores.score, scores.rho * scores.delta)

    def test_kept_sorted_unique(self):
        x = np.random.default_rng(4).normal(size=(30, 3))
        _, sel = prune(x, DpcConfig(epsilon=4))
        kept = sel.kept
        assert np.all(np.diff(kept) > 0)
        assert len(kept) == 30 // 4

    def test_constant_tokens_tie_break_keeps_prefix(self):
        x = np.ones((12, 3))
        _, sel = prune(x, DpcConfig(epsilon=3))
        assert sel.kept.tolist() == [0, 1, 2, 3]


class TestOracleEquivalence:
    def test_random_sets_match_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 65))
            c = int(rng.integers(1, 9))
            k = int(rng.integers(1, 9))
            tau = float(rng.choice([1.0, c]))
            eps = int(rng.integers(1, 11))
            x = rng.normal(size=(n, c))
            scores, sel = prune(x, DpcConfig(k=k, tau=tau, epsilon=eps))
            rho_o, delta_o, score_o, kept_o = oracle_scores(x.tolist(), k, tau, eps)
            assert np.allclose(scores.rho, rho_o, rtol=1e-12, atol=1e-15)
            assert np.allclose(scores.delta, delta_o, rtol=1e-12, atol=1e-15)
            assert np.allclose(scores.score, score_o, rtol=1e-12, atol=1e-15)
            assert sel.kept.tolist() == kept_o


class TestInvariances:
    def test_permutation_consistency(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(20, 4))
        cfg = DpcConfig(k=3, epsilon=4)
        scores, sel = prune(x, cfg)
        perm = rng.permutation(20)
        scores_p, sel_p = prune(x[perm], cfg)
        assert np.allclose(scores_p.rho, scores.rho[perm], rtol=1e-12)
        # distinct scores: the selected token vectors are the same multiset
        kept_vectors = np.sort(x[sel.kept], axis=0)
        kept_vectors_p = np.sort(x[perm][sel_p.kept], axis=0)
        assert np.allclose(kept_vectors, kept_vectors_p, rtol=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(15, 3))
        shift = x + rng.normal(size=3)
        cfg = DpcConfig(k=4, epsilon=3)
        a, sel_a = prune(x, cfg)
        b, sel_b = prune(shift, cfg)
        assert np.allclose(a.rho, b.rho, rtol=1e-9, atol=1e-12)
        assert np.allclose(a.delta, b.delta, rtol=1e-9, atol=1e-12)
        assert np.allclose(a.score, b.score, rtol=1e-9, atol=1e-12)
        assert sel_a.kept.tolist() == sel_b.kept.tolist()

    def test_monotone_epsilon_nesting(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(24, 4))
        kept = {}
        for eps in (1, 2, 3, 4, 6):
            _, sel = prune(x, DpcConfig(epsilon=eps))
            kept[eps] = set(sel.kept.tolist())
        for small, big in [(1, 2), (2, 3), (3, 4), (4, 6)]:
            assert kept[big] <= kept[small]

    def test_budget_law_property(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            n = int(rng.integers(1, 40))
            eps = int(rng.integers(1, 12))
            _, sel = prune(rng.normal(size=(n, 2)), DpcConfig(epsilon=eps))
            assert len(sel.kept) == max(1, n // eps)


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"k": 0}, {"tau": 0.0}, {"tau": -1.0}, {"epsilon": 0},
    ])
    def test_bad_config_rejected(self, kwargs):
        with pytest.raises(ValueError):
            DpcConfig(**kwargs)
