"""Tests für die Rückwärts-Differentiation und ihre Primitive."""

import math

import numpy as np
import pytest

from snnd.autodiff import (
    Tensor,
    backward,
    cross_entropy,
    dense_forward,
    finite_difference_check,
    get_graph,
    kl_divergence,
    mean,
    mse_loss,
    no_grad,
    softmax,
    stack,
    take,
)
from snnd.errors import DataError, DimensionError, NumericError, ParameterError, UsageError


class TestDense:
    def test_identity_like_map(self):
        y = dense_forward(Tensor([[1, 0]]), Tensor([[2, 0], [0, 3]]), Tensor([0, 0]))
        np.testing.assert_array_equal(y.data, [[2, 0]])

    def test_zero_input_yields_bias(self):
        y = dense_forward(Tensor([[0, 0]]), Tensor([[5, -1], [2, 7]]), Tensor([1, 1]))
        np.testing.assert_array_equal(y.data, [[1, 1]])

    def test_hand_matrix_multiply(self):
        y = dense_forward(Tensor([[1, 1]]), Tensor([[1, 2], [3, 4]]), Tensor([0.5, 0.5]))
        np.testing.assert_allclose(y.data, [[4.5, 6.5]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            dense_forward(Tensor([[1, 1, 1]]), Tensor([[1, 2], [3, 4]]), Tensor([0, 0]))


class TestSoftmax:
    def test_equal_logits(self):
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_temperature(self):
        np.testing.assert_allclose(softmax(Tensor([2.0, 0.0]), 2.0).data, [0.7311, 0.2689], atol=1e-4)

    def test_three_classes(self):
        p = softmax(Tensor([2.0, 0.0, 0.0])).data
        np.testing.assert_allclose(p, [0.7870, 0.1065, 0.1065], atol=1e-4)

    def test_rows_sum_to_one(self, rng):
        p = softmax(Tensor(rng.normal(0, 50, size=(20, 7))), 0.3).data
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("temperature", [0.0, -1.0])
    def test_non_positive_temperature(self, temperature):
        with pytest.raises(ParameterError):
            softmax(Tensor([1.0, 2.0]), temperature)


class TestCrossEntropy:
    def test_uniform_two_class(self):
        assert cross_entropy(Tensor([[0.0, 0.0]]), [0]).item() == pytest.approx(math.log(2), abs=1e-6)

    def test_saturated_correct_class(self):
        assert cross_entropy(Tensor([[1e3, 0.0]]), [0]).item() == pytest.approx(0.0, abs=1e-12)

    def test_wrong_class(self):
        assert cross_entropy(Tensor([[2.0, 0.0]]), [1]).item() == pytest.approx(2.1269, abs=1e-3)

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            cross_entropy(Tensor([[0.0, 0.0]]), [2])


class TestKlDivergence:
    def test_identical(self):
        p = Tensor([[0.5, 0.5]])
        assert kl_divergence(p, p).item() == pytest.approx(0.0, abs=1e-15)

    def test_hand_values(self):
        sharp = Tensor([[0.7311, 0.2689]])
        flat = Tensor([[0.5, 0.5]])
        assert kl_divergence(sharp, flat).item() == pytest.approx(0.1110, abs=1e-3)
        assert kl_divergence(flat, sharp).item() == pytest.approx(0.1201, abs=1e-3)

    def test_zero_probabilities_stay_finite(self):
        value = kl_divergence(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]])).item()
        assert math.isfinite(value)
        assert value == pytest.approx(math.log(1.0 / 1e-12))

    def test_not_normalized(self):
        with pytest.raises(DataError):
            kl_divergence(Tensor([[0.6, 0.6]]), Tensor([[0.5, 0.5]]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            kl_divergence(Tensor([[0.5, 0.5]]), Tensor([[0.2, 0.3, 0.5]]))

    def test_random_simplex_points(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            classes = int(rng.integers(2, 6))
            p = rng.dirichlet(np.ones(classes), size=3)
            q = rng.dirichlet(np.ones(classes), size=3)
            assert kl_divergence(Tensor(p), Tensor(p)).item() == 0.0
            assert kl_divergence(Tensor(p), Tensor(q)).item() >= 0.0


class TestMse:
    def test_values(self):
        assert mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
        assert mse_loss(Tensor([1.0, 1.0]), Tensor([0.0, 0.0])).item() == pytest.approx(1.0)
        assert mse_loss(Tensor([2.0, 0.0]), Tensor([0.0, 0.0])).item() == pytest.approx(2.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse_loss(Tensor([1.0]), Tensor([1.0, 2.0]))


class TestBackward:
    def test_sum(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_mse(self):
        x = Tensor([3.0], requires_grad=True)
        backward(mse_loss(x, Tensor([0.0])))
        np.testing.assert_allclose(x.grad, [6.0])

    def test_cross_entropy(self):
        logits = Tensor([[0.0, 0.0]], requires_grad=True)
        backward(cross_entropy(logits, [0]))
        np.testing.assert_allclose(logits.grad, [[-0.5, 0.5]])

    def test_non_scalar_loss(self):
        with pytest.raises(UsageError):
            backward(Tensor([1.0, 2.0], requires_grad=True) * 2.0)
        get_graph().clear()

    def test_reused_tensor_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        backward((x * x).sum())
        np.testing.assert_allclose(x.grad, [4.0])

    def test_graph_cleared_after_backward(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = (x * 3.0).sum()
        assert len(get_graph()) > 0
        backward(loss)
        assert len(get_graph()) == 0

    def test_take_stack_mean(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        y = mean(stack([take(x, 1), take(x, 0)]), axis=0)
        backward(y.sum())
        np.testing.assert_allclose(x.grad, [[0.5, 0.5], [0.5, 0.5]])


class TestNoGrad:
    def test_nothing_recorded(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with no_grad():
            y = (x * 2.0).sum()
        assert len(get_graph()) == 0
        assert not y.requires_grad


class TestNumeric:
    def test_overflow_raises(self):
        with pytest.raises(NumericError):
            Tensor([1e308]) * 10.0


class TestFiniteDifference:
    def test_sum_of_squares(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        assert finite_difference_check(lambda t: (t * t).sum(), x, eps=1e-5) < 1e-6

    def test_cross_entropy_after_dense(self, rng):
        x = Tensor(rng.normal(0, 0.1, size=(3, 4)), requires_grad=True)
        W = Tensor(rng.normal(0, 0.5, size=(4, 5)), requires_grad=True)
        b = Tensor(np.zeros(5), requires_grad=True)
        labels = [0, 3, 4]
        for target in (x, W, b):
            error = finite_difference_check(
                lambda _: cross_entropy(dense_forward(x, W, b), labels), target
            )
            assert error < 1e-5

    def test_softmax_kl_chain(self, rng):
        t = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        s = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        for target in (t, s):
            error = finite_difference_check(
                lambda _: kl_divergence(softmax(t, 2.0), softmax(s, 2.0)), target
            )
            assert error < 1e-5

    def test_zero_gradient(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        assert finite_difference_check(lambda t: Tensor(3.0) + 0.0, x) == 0.0
