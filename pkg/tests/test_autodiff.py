"""Gradient correctness and numerical-stability behavior of the tensor core."""
from __future__ import annotations

import numpy as np
import pytest

from molmpnn import autodiff as ad
from molmpnn.autodiff import Tensor


def fd_grad(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at x."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        old = xf[i]
        xf[i] = old + step
        hi = fn(x)
        xf[i] = old - step
        lo = fn(x)
        xf[i] = old
        flat[i] = (hi - lo) / (2 * step)
    return grad


def analytic_grad(fn, x: np.ndarray) -> np.ndarray:
    t = Tensor(x.copy(), requires_grad=True)
    loss = fn(t)
    ad.backward(loss)
    return t.grad


def check_op(build, x: np.ndarray, rtol: float = 1e-6):
    """build(Tensor) -> Tensor (any shape); compared against FD of its sum."""
    def scalar(arr):
        return float(ad.tsum(build(Tensor(arr))).data)

    got = analytic_grad(lambda t: ad.tsum(build(t)), x)
    want = fd_grad(scalar, x)
    np.testing.assert_allclose(got, want, rtol=rtol, atol=1e-8)


class TestElementwiseGradients:
    def test_power_matches_hand_derivative(self):
        """d/dx x^2 evaluated at 3 is exactly 6."""
        t = Tensor(np.array([3.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.power(t, 2.0)))
        assert t.grad[0] == pytest.approx(6.0, abs=1e-12)

    def test_add_mul_power(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 3))
        other = Tensor(rng.standard_normal((4, 3)))
        check_op(lambda t: ad.add(t, other), x.copy())
        check_op(lambda t: ad.mul(t, other), x.copy())
        check_op(lambda t: ad.power(t, 3.0), x.copy() + 2.0)

    def test_broadcast_bias_gradient_sums_rows(self):
        """(4,3) + (3,) broadcast: bias gradient is the column sum of ones."""
        b = Tensor(np.zeros(3), requires_grad=True)
        x = Tensor(np.ones((4, 3)))
        ad.backward(ad.tsum(ad.add(x, b)))
        np.testing.assert_array_equal(b.grad, np.full(3, 4.0))

    def test_matmul_and_dense(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 4))
        w = Tensor(rng.standard_normal((4, 3)))
        b = Tensor(rng.standard_normal(3))
        check_op(lambda t: ad.matmul(t, w), x.copy())
        check_op(lambda t: ad.dense(t, w, b), x.copy())
        # and through the weight
        xt = Tensor(x)
        wx = rng.standard_normal((4, 3))
        check_op(lambda t: ad.dense(xt, t, b), wx)

    def test_relu_and_leaky_slopes(self):
        t = Tensor(np.array([-2.0, 3.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.relu(t)))
        np.testing.assert_array_equal(t.grad, [0.0, 1.0])
        t2 = Tensor(np.array([-2.0, 3.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.leaky_relu(t2, slope=0.2)))
        np.testing.assert_array_equal(t2.grad, [0.2, 1.0])

    def test_sigmoid_mean_reshape_gather_concat(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 3))
        check_op(ad.sigmoid, x.copy())
        check_op(ad.tmean, x.copy())
        check_op(lambda t: ad.reshape(t, (12,)), x.copy())
        idx = np.array([0, 2, 2, 1, 3])
        check_op(lambda t: ad.gather(t, idx), x.copy())
        other = Tensor(rng.standard_normal((4, 2)))
        check_op(lambda t: ad.concat([t, other], axis=1), x.copy())

    def test_gather_accumulates_repeated_rows(self):
        t = Tensor(np.zeros((3, 2)), requires_grad=True)
        ad.backward(ad.tsum(ad.gather(t, np.array([1, 1, 1]))))
        np.testing.assert_array_equal(t.grad, [[0, 0], [3, 3], [0, 0]])


class TestDropout:
    def test_eval_mode_and_rate_zero_are_identity(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(
            ad.dropout(x, 0.5, rng, training=False).data, x.data)
        np.testing.assert_array_equal(
            ad.dropout(x, 0.0, rng, training=True).data, x.data)

    def test_inverted_scaling_preserves_expectation(self):
        rng = np.random.default_rng(3)
        x = Tensor(np.ones((200, 50)))
        out = ad.dropout(x, 0.25, rng, training=True).data
        kept = out[out != 0]
        assert np.allclose(kept, 1.0 / 0.75)
        assert abs(out.mean() - 1.0) < 0.02

    def test_rate_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            ad.dropout(Tensor(np.ones(3)), 1.0, rng, training=True)
        with pytest.raises(ValueError):
            ad.dropout(Tensor(np.ones(3)), -0.1, rng, training=True)


class TestSegmentOps:
    def test_segment_max_oracle(self):
        """Two rows in one segment reduce to the columnwise max [[3,5]]."""
        t = Tensor(np.array([[1.0, 5.0], [3.0, 2.0]]))
        out = ad.segment_max(t, np.array([0, 0]), 1)
        np.testing.assert_array_equal(out.data, [[3.0, 5.0]])

    def test_segment_max_routes_gradient_to_first_argmax(self):
        t = Tensor(np.array([[2.0], [2.0], [1.0]]), requires_grad=True)
        ad.backward(ad.tsum(ad.segment_max(t, np.array([0, 0, 0]), 1)))
        np.testing.assert_array_equal(t.grad, [[1.0], [0.0], [0.0]])

    def test_empty_segments_are_zero_and_grad_free(self):
        t = Tensor(np.array([[4.0, -1.0]]), requires_grad=True)
        for op in (ad.segment_max, ad.segment_mean):
            out = op(t, np.array([2]), 4)
            np.testing.assert_array_equal(out.data[[0, 1, 3]], 0.0)
            assert out.data.shape == (4, 2)
        ad.backward(ad.tsum(ad.segment_max(t, np.array([2]), 4)))
        np.testing.assert_array_equal(t.grad, [[1.0, 1.0]])

    def test_segment_mean_matches_fd(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((6, 3))
        seg = np.array([0, 0, 1, 1, 1, 3])
        check_op(lambda t: ad.segment_mean(t, seg, 4), x.copy())

    def test_segment_max_matches_fd_off_ties(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((6, 3))  # continuous draws: ties have measure zero
        seg = np.array([0, 1, 1, 2, 2, 2])
        check_op(lambda t: ad.segment_max(t, seg, 3), x.copy())

    def test_singleton_softmax_is_exactly_one(self):
        t = Tensor(np.array([[123.456]]))
        out = ad.segment_softmax(t, np.array([0]), 1)
        assert out.data[0, 0] == 1.0

    def test_tied_scores_split_evenly(self):
        t = Tensor(np.array([[7.0], [7.0]]))
        out = ad.segment_softmax(t, np.array([0, 0]), 1)
        np.testing.assert_array_equal(out.data, [[0.5], [0.5]])

    def test_segment_softmax_large_scores_stable(self):
        t = Tensor(np.array([[1000.0], [999.0], [-1000.0]]))
        out = ad.segment_softmax(t, np.array([0, 0, 0]), 1).data
        assert np.all(np.isfinite(out))
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_segment_softmax_matches_fd(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 2))
        seg = np.array([0, 0, 0, 1, 1])
        check_op(lambda t: ad.segment_softmax(t, seg, 2), x.copy(), rtol=1e-5)

    def test_segment_softmax_sums_to_one_per_segment(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((8, 4)))
        seg = np.array([0, 0, 1, 1, 1, 2, 3, 3])
        out = ad.segment_softmax(x, seg, 4).data
        for s in range(4):
            np.testing.assert_allclose(out[seg == s].sum(axis=0), 1.0, atol=1e-12)


class TestLosses:
    def test_bce_at_logit_zero_half_target_is_ln2(self):
        loss = ad.bce_with_logits(Tensor(np.zeros(4)), np.full(4, 0.5))
        assert float(loss.data) == pytest.approx(np.log(2.0), abs=1e-15)

    def test_bce_extreme_logits_finite(self):
        logits = Tensor(np.array([1000.0, -1000.0]), requires_grad=True)
        loss = ad.bce_with_logits(logits, np.array([1.0, 0.0]))
        assert float(loss.data) == pytest.approx(0.0, abs=1e-12)
        ad.backward(loss)
        assert np.all(np.isfinite(logits.grad))
        # and the saturated-wrong case grows linearly instead of overflowing
        wrong = ad.bce_with_logits(Tensor(np.array([1000.0])), np.array([0.0]))
        assert float(wrong.data) == pytest.approx(1000.0, rel=1e-12)

    def test_bce_and_mse_match_fd(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(6)
        targets = rng.uniform(0, 1, 6)
        check_op(lambda t: ad.bce_with_logits(t, targets), x.copy())
        check_op(lambda t: ad.mse(t, targets), x.copy())


class TestBatchNorm:
    @staticmethod
    def _bn_params(n):
        return (Tensor(np.ones(n), requires_grad=True),
                Tensor(np.zeros(n), requires_grad=True),
                np.zeros(n), np.ones(n))

    def test_training_normalizes_and_updates_buffers(self):
        gamma, beta, rmean, rvar = self._bn_params(2)
        x = Tensor(np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]]))
        out = ad.batch_norm(x, gamma, beta, rmean, rvar, training=True).data
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-3)
        # running stats moved toward the batch stats (momentum 0.1, biased var)
        np.testing.assert_allclose(rmean, 0.1 * np.array([3.0, 30.0]))
        batch_var = x.data.var(axis=0)
        np.testing.assert_allclose(rvar, 0.9 * 1.0 + 0.1 * batch_var)

    def test_eval_uses_running_buffers(self):
        gamma, beta, _, _ = self._bn_params(1)
        rmean, rvar = np.array([2.0]), np.array([4.0])
        x = Tensor(np.array([[4.0]]))
        out = ad.batch_norm(x, gamma, beta, rmean, rvar, training=False).data
        assert out[0, 0] == pytest.approx((4.0 - 2.0) / np.sqrt(4.0 + 1e-5))
        np.testing.assert_array_equal(rmean, [2.0])  # eval never mutates

    def test_single_row_batch_has_no_nan(self):
        gamma, beta, rmean, rvar = self._bn_params(3)
        x = Tensor(np.array([[1.0, 2.0, 3.0]]), requires_grad=True)
        out = ad.batch_norm(x, gamma, beta, rmean, rvar, training=True)
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-2)
        ad.backward(ad.tsum(out))
        assert np.all(np.isfinite(x.grad))

    def test_gradients_match_fd(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((5, 3)) * 2 + 1

        def build(t):
            gamma = Tensor(np.array([1.5, 0.5, 2.0]))
            beta = Tensor(np.array([0.1, -0.2, 0.0]))
            return ad.batch_norm(t, gamma, beta, np.zeros(3), np.ones(3),
                                 training=True)

        check_op(build, x, rtol=1e-5)


class TestBackwardMechanics:
    def test_grad_accumulates_until_cleared(self):
        t = Tensor(np.array([1.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.mul(t, Tensor(np.array([2.0])))))
        ad.backward(ad.tsum(ad.mul(t, Tensor(np.array([2.0])))))
        assert t.grad[0] == 4.0  # two backward passes accumulate
        t.grad = None
        ad.backward(ad.tsum(ad.mul(t, Tensor(np.array([2.0])))))
        assert t.grad[0] == 2.0

    def test_diamond_graph_sums_both_paths(self):
        """y = x*x + x*x revisits x through two paths; grad = 4x."""
        t = Tensor(np.array([3.0]), requires_grad=True)
        sq = ad.mul(t, t)
        ad.backward(ad.tsum(ad.add(sq, sq)))
        assert t.grad[0] == pytest.approx(12.0)

    def test_deep_chain_does_not_recurse(self):
        """Iterative traversal survives graphs deeper than the recursion limit."""
        t = Tensor(np.array([1.0]), requires_grad=True)
        node = t
        for _ in range(5000):
            node = ad.add(node, Tensor(np.array([0.0])))
        ad.backward(ad.tsum(node))
        assert t.grad[0] == 1.0

    def test_constants_get_no_grad(self):
        const = Tensor(np.array([2.0]))
        t = Tensor(np.array([3.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.mul(t, const)))
        assert const.grad is None
