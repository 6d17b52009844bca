from itertools import permutations

import numpy as np
import pytest

from trot.ot_core import (
    Coupling,
    OrderGroups,
    TrotHyperparams,
    class_groups_from_labels,
    cost_matrix,
    entropy,
    gcg_solve,
    group_sparse,
    order_groups,
    pairwise_sq_dists,
    sinkhorn,
    temporal_reg,
)

from .conftest import make_atlas


def exact_ot_cost(a, b, cost):
    """Brute-force optimum over permutation couplings (uniform marginals)."""
    n = len(a)
    best = np.inf
    for perm in permutations(range(n)):
        best = min(best, sum(cost[i, perm[i]] for i in range(n)) / n)
    return best


class TestCostMatrix:
    def test_direct_arithmetic(self):
        src = make_atlas([[0, 0], [1, 0]], [0, 0], [1, 2])
        tgt = make_atlas([[0, 0], [0, 2]], [0, 0], [1, 2])
        assert cost_matrix(src, tgt).tolist() == [[0.0, 4.0], [1.0, 5.0]]

    def test_identity_zero_diagonal(self, rng):
        atlas = make_atlas(rng.normal(0, 1, (4, 3)), [0] * 4, [1, 2, 3, 4])
        assert np.allclose(np.diag(cost_matrix(atlas, atlas)), 0.0)

    def test_homogeneous_scaling(self, rng):
        m = rng.normal(0, 1, (3, 2))
        a1 = make_atlas(m, [0] * 3, [1, 2, 3])
        a2 = make_atlas(2 * m, [0] * 3, [1, 2, 3])
        b1 = make_atlas(m + 1, [0] * 3, [1, 2, 3])
        b2 = make_atlas(2 * (m + 1), [0] * 3, [1, 2, 3])
        assert np.allclose(cost_matrix(a2, b2), 4 * cost_matrix(a1, b1))


class TestEntropy:
    def test_uniform_two_by_two(self):
        value, _ = entropy(np.full((2, 2), 0.25))
        assert value == pytest.approx(np.log(0.25) - 1, abs=1e-12)

    def test_one_hot_zero_log_zero(self):
        value, grad = entropy(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert value == pytest.approx(-1.0)
        assert grad[0, 1] == -745.0

    def test_gradient_at_uniform(self):
        _, grad = entropy(np.full((2, 2), 0.25))
        assert np.allclose(grad, np.log(0.25))


class TestGroupSparse:
    def test_singleton_groups_reduce_to_l1(self):
        gamma = np.array([[0.5, 0.0], [0.0, 0.5]])
        value, _ = group_sparse(gamma, [np.array([0]), np.array([1])])
        assert value == pytest.approx(1.0)

    def test_zero_coupling(self):
        value, sub = group_sparse(np.zeros((2, 2)), [np.array([0, 1])])
        assert value == 0.0
        assert np.all(sub == 0.0)

    def test_three_four_five(self):
        gamma = np.array([[0.3], [0.4]])
        value, sub = group_sparse(gamma, [np.array([0, 1])])
        assert value == pytest.approx(0.5)
        assert sub[:, 0] == pytest.approx([0.6, 0.8])


class TestTemporalReg:
    def _groups(self):
        # single class, orders 1,2 on both sides
        src = make_atlas([[0, 0], [0, 1]], [0, 0], [1, 2])
        tgt = make_atlas([[1, 0], [1, 1]], [0, 0], [1, 2])
        return order_groups(src, tgt)

    def test_no_order_violating_mass(self):
        gamma = np.array([[0.5, 0.0], [0.0, 0.5]])
        value, _ = temporal_reg(gamma, self._groups(), "mismatched")
        assert value == 0.0

    def test_all_mass_mismatched(self):
        gamma = np.array([[0.0, 0.5], [0.5, 0.0]])
        value, _ = temporal_reg(gamma, self._groups(), "mismatched")
        assert value == pytest.approx(1.0)

    def test_matched_mode_is_literal_formula(self):
        gamma = np.array([[0.5, 0.0], [0.0, 0.5]])
        value, _ = temporal_reg(gamma, self._groups(), "matched")
        assert value == pytest.approx(1.0)

    def test_matched_sets_one_column_per_target_class(self):
        src = make_atlas(np.zeros((4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        tgt = make_atlas(np.ones((4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        og = order_groups(src, tgt)
        for i, cols in enumerate(og.matched):
            assert len(cols) == 2  # one per target class
            assert sorted(np.concatenate([cols, og.mismatched[i]])) == [0, 1, 2, 3]


class TestSinkhorn:
    def test_zero_cost_uniform(self):
        c = sinkhorn(np.full(2, 0.5), np.full(2, 0.5), np.zeros((2, 2)), 1.0)
        assert np.allclose(c.values, 0.25)

    def test_near_permutation_at_small_entropy(self):
        cost = np.array([[0.0, 1.0], [1.0, 0.0]])
        c = sinkhorn(np.full(2, 0.5), np.full(2, 0.5), cost, 1e-3)
        assert c.values[0, 1] < 1e-3 and c.values[1, 0] < 1e-3
        exact = exact_ot_cost(np.full(2, 0.5), np.full(2, 0.5), cost)
        assert (c.values * cost).sum() == pytest.approx(exact, rel=0.01)

    def test_marginals_satisfied(self, rng):
        a = np.full(12, 1 / 12)
        b = np.full(12, 1 / 12)
        c = sinkhorn(a, b, rng.uniform(size=(12, 12)), 0.05)
        assert np.abs(c.values.sum(axis=1) - a).max() <= 1e-8
        assert np.abs(c.values.sum(axis=0) - b).max() <= 1e-8
        assert c.converged

    def test_rejects_bad_marginals(self):
        with pytest.raises(ValueError):
            sinkhorn(np.array([0.5, 0.0]), np.array([0.5, 0.5]), np.zeros((2, 2)), 0.1)
        with pytest.raises(ValueError):
            sinkhorn(np.array([0.7, 0.5]), np.array([0.5, 0.5]), np.zeros((2, 2)), 0.1)

    def test_unconverged_is_flagged(self, rng):
        c = sinkhorn(np.full(8, 1 / 8), np.full(8, 1 / 8), rng.uniform(size=(8, 8)), 1e-4,
                     max_iters=3)
        assert not c.converged
        assert c.marginal_violation > 1e-9


class TestSubgradients:
    def finite_difference(self, fn, gamma, eps=1e-7):
        grad = np.zeros_like(gamma)
        for idx in np.ndindex(gamma.shape):
            up, down = gamma.copy(), gamma.copy()
            up[idx] += eps
            down[idx] -= eps
            grad[idx] = (fn(up) - fn(down)) / (2 * eps)
        return grad

    def test_group_sparse_gradient(self, rng):
        groups = [np.array([0, 1]), np.array([2])]
        gamma = rng.uniform(0.1, 1.0, (3, 4))
        _, sub = group_sparse(gamma, groups)
        fd = self.finite_difference(lambda g: group_sparse(g, groups)[0], gamma)
        assert np.abs(sub - fd).max() / np.abs(fd).max() < 1e-5

    def test_temporal_reg_gradient(self, rng):
        src = make_atlas(np.zeros((4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        tgt = make_atlas(np.ones((4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        og = order_groups(src, tgt)
        gamma = rng.uniform(0.1, 1.0, (4, 4))
        for mode in ("matched", "mismatched"):
            _, sub = temporal_reg(gamma, og, mode)
            fd = self.finite_difference(lambda g: temporal_reg(g, og, mode)[0], gamma)
            assert np.abs(sub - fd).max() / np.abs(fd).max() < 1e-5

    def test_convexity(self, rng):
        groups = [np.array([0, 1]), np.array([2, 3])]
        src = make_atlas(np.zeros((4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        tgt = make_atlas(np.ones((4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        og = order_groups(src, tgt)
        for _ in range(50):
            g1 = rng.uniform(0, 1, (4, 4))
            g2 = rng.uniform(0, 1, (4, 4))
            t = rng.uniform()
            mix = t * g1 + (1 - t) * g2
            for fn in (
                lambda g: group_sparse(g, groups)[0],
                lambda g: temporal_reg(g, og, "mismatched")[0],
            ):
                assert fn(mix) <= t * fn(g1) + (1 - t) * fn(g2) + 1e-12


class TestGcg:
    def test_reduces_to_sinkhorn(self, rng):
        a, b = np.full(4, 0.25), np.full(5, 0.2)
        cost = rng.uniform(size=(4, 5))
        plain = sinkhorn(a, b, cost, 0.1)
        coup, _ = gcg_solve(a, b, cost, TrotHyperparams(entropy_weight=0.1))
        assert np.abs(coup.values - plain.values).max() <= 1e-8

    def test_trace_non_increasing_and_feasible(self, rng):
        # means kept within a unit box so the entropic subproblems stay in
        # Sinkhorn's fast linear-convergence regime
        src = make_atlas(rng.uniform(0, 0.5, (4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        tgt = make_atlas(rng.uniform(0, 0.5, (4, 2)), [0, 0, 1, 1], [1, 2, 1, 2])
        og = order_groups(src, tgt)
        a = b = np.full(4, 0.25)
        hyper = TrotHyperparams(entropy_weight=0.1, group_weight=0.5, order_weight=0.5)
        coup, trace = gcg_solve(a, b, cost_matrix(src, tgt), hyper, og)
        assert np.all(np.diff(trace) <= 1e-12)
        assert coup.marginal_violation <= 1e-6

    def test_requires_groups_for_weights(self):
        a = b = np.full(2, 0.5)
        with pytest.raises(ValueError):
            gcg_solve(a, b, np.zeros((2, 2)), TrotHyperparams(group_weight=1.0))
        with pytest.raises(ValueError):
            gcg_solve(a, b, np.zeros((2, 2)), TrotHyperparams(order_weight=1.0))

    def test_order_decoy_mass_concentrates(self):
        # one source activity; target has an honest same-order class far away
        # and a reversed-order decoy nearby
        src = make_atlas([[0, 0], [0, 2]], [0, 0], [1, 2])
        tgt = make_atlas(
            [[3, 0.9], [3, 1.1], [0.5, 2.0], [0.5, 0.0]], [1, 1, 2, 2], [1, 2, 1, 2]
        )
        og = order_groups(src, tgt)
        cost = cost_matrix(src, tgt)
        a, b = src.weights, tgt.weights

        def matched_mass(values):
            return min(
                values[i, cols].sum() / values[i].sum() for i, cols in enumerate(og.matched)
            )

        free, _ = gcg_solve(a, b, cost, TrotHyperparams(entropy_weight=0.25), og)
        pinned, _ = gcg_solve(
            a, b, cost, TrotHyperparams(entropy_weight=0.25, order_weight=10.0), og
        )
        assert matched_mass(free.values) < 0.5
        assert matched_mass(pinned.values) >= 0.9


class TestHyperparams:
    def test_entropy_weight_positive(self):
        with pytest.raises(ValueError):
            TrotHyperparams(entropy_weight=0.0)

    def test_order_mode_validated(self):
        with pytest.raises(ValueError):
            TrotHyperparams(order_mode="sideways")

    def test_class_groups_partition(self):
        og = class_groups_from_labels(np.array([1, 0, 1, 2]))
        assert [g.tolist() for g in og.class_groups] == [[1], [0, 2], [3]]


def test_pairwise_sq_dists_matches_direct(rng):
    x, y = rng.normal(0, 1, (6, 3)), rng.normal(0, 1, (4, 3))
    direct = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    assert np.allclose(pairwise_sq_dists(x, y), direct, atol=1e-12)
