import numpy as np
import pytest

from deepskel import losses
from deepskel.errors import ClassOutOfRange


class TestClassWeights:
    def test_hand_counts(self):
        gt = np.repeat([0, 1, 2], [90, 9, 1]).reshape(10, 10)
        beta = losses.class_weights(gt, 3)
        assert np.allclose(beta, [0.009901, 0.099010, 0.891089], atol=1e-6)

    def test_equal_counts_uniform(self):
        gt = np.repeat([0, 1, 2, 3], 4).reshape(4, 4)
        assert np.allclose(losses.class_weights(gt, 4), 0.25)

    def test_absent_class_gets_zero(self):
        gt = np.repeat([0, 2], [100, 50]).reshape(10, 15)
        beta = losses.class_weights(gt, 3)
        assert np.allclose(beta, [1 / 3, 0.0, 2 / 3])

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            gt = rng.integers(0, 5, (12, 12))
            assert abs(losses.class_weights(gt, 5).sum() - 1.0) < 1e-12


class TestSoftmax:
    def test_uniform_on_equal_inputs(self):
        assert np.allclose(losses.softmax(np.zeros((4, 3, 3))), 0.25)

    def test_closed_form(self):
        p = losses.softmax(np.array([[0.0], [np.log(2.0)]]))
        assert np.allclose(p[:, 0], [1 / 3, 2 / 3])

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(5, 4, 4))
        assert np.allclose(losses.softmax(a), losses.softmax(a + 123.4),
                           atol=1e-12)

    def test_large_inputs_stable(self):
        p = losses.softmax(np.array([[1000.0], [1000.0]]))
        assert np.allclose(p, 0.5)


class TestSideLoss:
    def test_one_hot_correct_is_zero(self):
        gt = np.array([[0, 1]], np.int8)
        probs = np.zeros((2, 1, 2))
        probs[0, 0, 0] = probs[1, 0, 1] = 1.0
        beta = np.array([0.5, 0.5])
        assert losses.side_loss(probs, gt, beta) < 1e-10

    def test_hand_value(self):
        gt = np.array([[0, 1]], np.int8)
        probs = np.full((2, 1, 2), 0.5)
        beta = np.array([0.5, 0.5])
        assert np.isclose(losses.side_loss(probs, gt, beta), 0.5 * np.log(2))

    def test_non_negative(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            probs = losses.softmax(rng.normal(size=(3, 4, 4)))
            gt = rng.integers(0, 3, (4, 4)).astype(np.int8)
            beta = losses.class_weights(gt, 3)
            assert losses.side_loss(probs, gt, beta) >= 0

    def test_class_out_of_range(self):
        with pytest.raises(ClassOutOfRange):
            losses.side_loss(np.full((2, 1, 1), 0.5), np.array([[5]]),
                             np.array([0.5, 0.5]))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        probs = losses.softmax(rng.normal(size=(3, 5, 5)))
        gt = rng.integers(0, 3, (5, 5)).astype(np.int8)
        beta = losses.class_weights(gt, 3)
        perm = rng.permutation(25)
        probs_p = probs.reshape(3, -1)[:, perm].reshape(3, 5, 5)
        gt_p = gt.reshape(-1)[perm].reshape(5, 5)
        assert np.isclose(losses.side_loss(probs, gt, beta),
                          losses.side_loss(probs_p, gt_p, beta))


class TestSideLossGradient:
    def test_one_hot_zero_gradient(self):
        gt = np.array([[1]], np.int8)
        probs = np.zeros((2, 1, 1))
        probs[1] = 1.0
        beta = np.array([0.5, 0.5])
        assert np.allclose(losses.side_loss_gradient(probs, gt, beta), 0.0)

    def test_hand_value(self):
        gt = np.array([[1]], np.int8)
        probs = np.full((2, 1, 1), 0.5)
        beta = np.array([0.5, 0.5])
        grad = losses.side_loss_gradient(probs, gt, beta)
        assert np.allclose(grad[:, 0, 0], [0.25, -0.25])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            acts = rng.normal(size=(4, 3, 3))
            gt = rng.integers(0, 4, (3, 3)).astype(np.int8)
            beta = losses.class_weights(gt, 4)
            probs = losses.softmax(acts)
            grad = losses.side_loss_gradient(probs, gt, beta)
            h = 1e-5
            for idx in np.ndindex(acts.shape):
                orig = acts[idx]
                acts[idx] = orig + h
                lp = losses.side_loss(losses.softmax(acts), gt, beta)
                acts[idx] = orig - h
                lm = losses.side_loss(losses.softmax(acts), gt, beta)
                acts[idx] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(fd - grad[idx]) <= 1e-6 * max(1.0, abs(fd))


class TestFusionLoss:
    def test_perfect_one_hot(self):
        gt = np.array([[1]], np.int8)
        acts = np.array([[[-100.0]], [[100.0]]])
        beta = np.array([0.5, 0.5])
        loss, _ = losses.fusion_loss(acts, gt, beta)
        assert loss < 1e-10

    def test_same_structure_as_side_loss(self):
        rng = np.random.default_rng(5)
        acts = rng.normal(size=(3, 4, 4))
        gt = rng.integers(0, 3, (4, 4)).astype(np.int8)
        beta = losses.class_weights(gt, 3)
        loss, _ = losses.fusion_loss(acts, gt, beta)
        assert np.isclose(loss, losses.side_loss(losses.softmax(acts), gt, beta))

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(6)
        acts = rng.normal(size=(4, 3, 3))
        gt = rng.integers(0, 4, (3, 3)).astype(np.int8)
        beta = losses.class_weights(gt, 4)
        _, grad = losses.fusion_loss(acts, gt, beta)
        h = 1e-5
        for idx in np.ndindex(acts.shape):
            orig = acts[idx]
            acts[idx] = orig + h
            lp = losses.fusion_loss(acts, gt, beta)[0]
            acts[idx] = orig - h
            lm = losses.fusion_loss(acts, gt, beta)[0]
            acts[idx] = orig
            fd = (lp - lm) / (2 * h)
            assert abs(fd - grad[idx]) <= 1e-6 * max(1.0, abs(fd))


class TestTotalObjective:
    def test_single_stage_zero_fusion(self):
        assert losses.total_objective([0.7], 0.0).total == 0.7

    def test_summation(self):
        v = losses.total_objective([0.1, 0.2, 0.3], 0.4)
        assert np.isclose(v.total, 1.0)

    def test_side_weight_scales_side_only(self):
        v = losses.total_objective([0.1, 0.2], 0.4, side_weight=2.0)
        assert np.isclose(v.total, 2.0 * 0.3 + 0.4)

    def test_breakdown_consistent(self):
        v = losses.total_objective([0.25, 0.5], 0.125)
        assert np.isclose(v.total, sum(v.side) + v.fusion)
