"""Engine-level checks: op semantics, graph accumulation, finite differences."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dialectmt import autodiff as ad
from dialectmt.autodiff import Tensor
from dialectmt.errors import DimensionError, EmptyInputError


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, np.eye(2))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_hand_product(self):
        out = ad.matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]),
                        Tensor([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_array_equal(out.data, [[0, 1], [0, 0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_backward_matches_finite_differences(self):
        report = ad.gradient_check(ad.matmul, [(3, 4), (4, 2)], tolerance=1e-6)
        assert report.passed


class TestSoftmaxRows:
    def test_uniform_row(self):
        out = ad.softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3] * 3])

    def test_large_logits_do_not_overflow(self):
        out = ad.softmax_rows(Tensor([[1000.0, 0.0, 0.0]]))
        assert np.isfinite(out.data).all()
        assert out.data[0, 0] == pytest.approx(1.0)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = ad.softmax_rows(Tensor(rng.standard_normal((6, 7)) * 10))
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=6),
           st.floats(-100, 100))
    def test_shift_invariance(self, row, shift):
        base = ad.softmax_rows(Tensor([row])).data
        shifted = ad.softmax_rows(Tensor([[x + shift for x in row]])).data
        np.testing.assert_allclose(base, shifted, atol=1e-9)

    def test_gradient(self):
        assert ad.gradient_check(ad.softmax_rows, [(4, 5)], tolerance=1e-6).passed


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        out = ad.layer_norm(Tensor([[1.0, 1.0, 1.0, 1.0]]),
                            np.ones(4), np.zeros(4))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_unit_variance_pair(self):
        out = ad.layer_norm(Tensor([[1.0, -1.0]]), np.ones(2), np.zeros(2))
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-2)

    def test_degenerate_dimension(self):
        with pytest.raises(DimensionError):
            ad.layer_norm(Tensor([[1.0]]), np.ones(1), np.zeros(1))

    def test_gradient(self):
        report = ad.gradient_check(ad.layer_norm, [(3, 6), (6,), (6,)],
                                   tolerance=1e-5)
        assert report.passed


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = ad.cross_entropy(Tensor(np.zeros((2, 4))), [1, 3])
        assert loss.item() == pytest.approx(np.log(4))

    def test_peaked_logits_approach_zero(self):
        logits = np.full((1, 4), -1e4)
        logits[0, 2] = 1e4
        assert ad.cross_entropy(Tensor(logits), [2]).item() == pytest.approx(0.0)

    def test_masked_mean_matches_hand_computation(self):
        logits = np.array([[2.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        full = -np.log(np.exp(logits) / np.exp(logits).sum(1, keepdims=True))
        expected = (full[0, 0] + full[2, 1]) / 2
        loss = ad.cross_entropy(Tensor(logits), [0, 0, 1],
                                ignore_mask=[False, True, False])
        assert loss.item() == pytest.approx(expected)

    def test_all_masked(self):
        with pytest.raises(EmptyInputError):
            ad.cross_entropy(Tensor(np.zeros((2, 3))), [0, 1], ignore_mask=[1, 1])


class TestMseLoss:
    def test_identity_is_exactly_zero(self):
        x = Tensor(np.random.default_rng(1).standard_normal((3, 4)))
        assert ad.mse_loss(x, Tensor(x.data.copy())).item() == 0.0

    def test_hand_value(self):
        assert ad.mse_loss(Tensor([1.0, 2.0]), Tensor([0.0, 0.0])).item() == 2.5

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((2, 5)), rng.standard_normal((2, 5))
        assert ad.mse_loss(Tensor(a), Tensor(b)).item() == pytest.approx(
            ad.mse_loss(Tensor(b), Tensor(a)).item())

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.mse_loss(Tensor(np.zeros((2, 2))), Tensor(np.zeros(3)))

    def test_gradient(self):
        assert ad.gradient_check(ad.mse_loss, [(3, 4), (3, 4)], tolerance=1e-6).passed


class TestGraph:
    def test_fanout_accumulates_both_contributions(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        with ad.record() as tape:
            doubled = ad.scale(x, 2.0)
            total = ad.add(doubled, x)            # x feeds two consumers
            loss = ad.mse_loss(total, np.zeros((1, 2)))
            tape.backward(loss)
        # d/dx mean((3x)^2) = 9x
        np.testing.assert_allclose(x.grad, 9.0 * x.data)

    def test_no_recording_outside_tape(self):
        x = Tensor([[1.0]], requires_grad=True)
        out = ad.scale(x, 3.0)
        assert out.requires_grad is False

    def test_no_grad_suspends_recording(self):
        x = Tensor([[1.0]], requires_grad=True)
        with ad.record():
            with ad.no_grad():
                out = ad.scale(x, 3.0)
        assert out.requires_grad is False

    def test_embedding_scatter_adds_repeated_rows(self):
        table = Tensor(np.ones((3, 2)), requires_grad=True)
        with ad.record() as tape:
            rows = ad.embedding(table, [1, 1, 2])
            loss = ad.mse_loss(rows, np.zeros((3, 2)))
            tape.backward(loss)
        assert table.grad[1, 0] == pytest.approx(2 * table.grad[2, 0])
        assert table.grad[0, 0] == 0.0


class TestGradientCheck:
    def test_broken_backward_fails(self):
        def broken(a):
            av = a.data

            def backward(g):
                if a.requires_grad:
                    if a.grad is None:
                        a.grad = np.zeros_like(av)
                    a.grad -= g  # sign flip
            return ad._make_out(av * 1.0, (a,), backward)

        report = ad.gradient_check(broken, [(2, 3)], tolerance=1e-4)
        assert not report.passed

    @pytest.mark.parametrize("seed", range(3))
    def test_randomized_shapes(self, seed):
        assert ad.gradient_check(ad.matmul, [(2, 3), (3, 2)],
                                 tolerance=1e-4, seed=seed).passed
