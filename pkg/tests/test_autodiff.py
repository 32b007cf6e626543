import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcbnet.autodiff import (Tensor, add, backward, backward_from,
                             binary_cross_entropy, concat, cross_entropy,
                             embedding_lookup, grouped_cross_entropy, masked_mean,
                             matmul, mean, relu, sigmoid, softmax)
from pcbnet.errors import (DimensionError, GraphError, LabelError,
                           VocabularyError)

from oracles import check_op_gradients

RNG = np.random.default_rng(2024)


def scalarize(t):
    return mean(t)


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        assert np.array_equal(out.data, [[3.0, 4.0], [5.0, 6.0]])

    def test_scalar_product_rule(self):
        a = Tensor([[2.0]], requires_grad=True)
        b = Tensor([[3.0]], requires_grad=True)
        out = matmul(a, b)
        assert out.data[0, 0] == 6.0
        backward(out)
        assert a.grad[0, 0] == 3.0
        assert b.grad[0, 0] == 2.0

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradients_match_finite_differences(self):
        a = RNG.normal(size=(3, 4))
        b = RNG.normal(size=(4, 2))
        check_op_gradients(lambda ts: scalarize(matmul(ts[0], ts[1])), [a, b])


class TestAddAndActivations:
    def test_bias_add_broadcast(self):
        x = Tensor(np.zeros((3, 2)), requires_grad=True)
        b = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        out = add(x, b)
        assert np.array_equal(out.data, np.tile([1.0, 2.0], (3, 1)))
        backward(mean(out))
        assert np.allclose(b.grad, [0.5, 0.5])

    def test_no_general_broadcast(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 1))))

    def test_relu_subgradient_at_zero_is_zero(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
        backward(mean(relu(x)))
        assert np.array_equal(x.grad, [0.0, 0.0, 1.0 / 3.0])

    def test_relu_backward_example(self):
        x = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
        out = mean(relu(x))  # sum/2
        backward(out)
        assert np.array_equal(x.grad * 2, [0.0, 1.0])

    @given(st.lists(st.floats(min_value=-500, max_value=500), min_size=1, max_size=8))
    def test_sigmoid_in_open_unit_interval(self, values):
        out = sigmoid(Tensor(np.array(values)))
        assert np.all(out.data > 0.0)
        assert np.all(out.data < 1.0)

    @given(st.integers(1, 5), st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=50)
    def test_softmax_rows_sum_to_one(self, b, c, seed):
        z = np.random.default_rng(seed).normal(scale=5.0, size=(b, c))
        out = softmax(Tensor(z))
        assert np.all(np.abs(out.data.sum(axis=1) - 1.0) < 1e-12)

    def test_activation_gradients(self):
        x = RNG.normal(size=(4, 3)) + np.sign(RNG.normal(size=(4, 3))) * 0.1
        check_op_gradients(lambda ts: scalarize(relu(ts[0])), [x])
        check_op_gradients(lambda ts: scalarize(sigmoid(ts[0])), [x])
        check_op_gradients(lambda ts: scalarize(softmax(ts[0])), [x])


class TestConcat:
    def test_1d_example(self):
        out = concat([Tensor([1.0, 2.0]), Tensor([3.0])], axis=0)
        assert np.array_equal(out.data, [1.0, 2.0, 3.0])

    def test_single_tensor_identity(self):
        x = np.array([[1.0, 2.0]])
        assert np.array_equal(concat([Tensor(x)], axis=1).data, x)

    def test_fusion_shape_arithmetic(self):
        parts = [Tensor(np.zeros((2, 128))), Tensor(np.zeros((2, 60))),
                 Tensor(np.zeros((2, 8)))]
        assert concat(parts, axis=1).shape == (2, 196)

    def test_incompatible_shapes(self):
        with pytest.raises(DimensionError):
            concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)

    def test_backward_slices_upstream(self):
        a = Tensor(RNG.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(RNG.normal(size=(2, 2)), requires_grad=True)
        out = concat([a, b], axis=1)
        upstream = RNG.normal(size=(2, 5))
        backward_from(out, upstream)
        assert np.array_equal(a.grad, upstream[:, :3])
        assert np.array_equal(b.grad, upstream[:, 3:])

    def test_gradients_match_finite_differences(self):
        arrays = [RNG.normal(size=(2, 3)), RNG.normal(size=(2, 2))]
        check_op_gradients(lambda ts: scalarize(concat(ts, axis=1)), arrays)


class TestBackwardContract:
    def test_identity_loss(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        backward(x)
        assert x.grad == 1.0

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(GraphError):
            backward(x)

    def test_repeated_backward_accumulates(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        loss = mean(x)
        backward(loss)
        first = x.grad.copy()
        loss2 = mean(x)
        backward(loss2)
        assert np.allclose(x.grad, 2 * first)

    def test_two_layer_mlp_matches_finite_differences(self):
        w1 = RNG.normal(size=(5, 4)) * 0.5
        b1 = RNG.normal(size=4) * 0.1
        w2 = RNG.normal(size=(4, 2)) * 0.5
        b2 = RNG.normal(size=2) * 0.1
        x = RNG.normal(size=(3, 5))

        def build_loss(ts):
            h = relu(add(matmul(Tensor(x), ts[0]), ts[1]))
            return mean(add(matmul(h, ts[2]), ts[3]))

        check_op_gradients(build_loss, [w1, b1, w2, b2])

    def test_diamond_graph_gradient(self):
        # x feeds two consumers; gradients must sum
        x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        left = relu(x)
        right = sigmoid(x)
        loss = mean(concat([left, right], axis=1))
        backward(loss)
        expected = (np.array([[1.0, 1.0]]) / 4.0
                    + (sigmoid(Tensor(x.data)).data
                       * (1 - sigmoid(Tensor(x.data)).data)) / 4.0)
        assert np.allclose(x.grad, expected)

    def test_determinism_bit_identical(self):
        def run():
            rng = np.random.default_rng(99)
            w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
            x = Tensor(rng.normal(size=(2, 4)))
            loss = cross_entropy(matmul(x, w), np.array([0, 2]))
            backward(loss)
            return loss.data.copy(), w.grad.copy()
        l1, g1 = run()
        l2, g2 = run()
        assert np.array_equal(l1, l2)
        assert np.array_equal(g1, g2)


class TestPoolingAndLookup:
    def test_mean_scalar(self):
        x = Tensor(np.array([[1.0, 3.0]]), requires_grad=True)
        out = mean(x)
        assert out.data == 2.0
        backward(out)
        assert np.allclose(x.grad, [[0.5, 0.5]])

    def test_masked_mean_ignores_padding(self):
        emb = RNG.normal(size=(1, 4, 3))
        mask_full = np.array([[1.0, 1.0, 0.0, 0.0]])
        out = masked_mean(Tensor(emb), mask_full)
        assert np.allclose(out.data[0], emb[0, :2].mean(axis=0))

    def test_masked_mean_all_masked_row_is_zero(self):
        out = masked_mean(Tensor(RNG.normal(size=(1, 3, 2))), np.zeros((1, 3)))
        assert np.array_equal(out.data, np.zeros((1, 2)))

    def test_masked_mean_gradients(self):
        emb = RNG.normal(size=(2, 3, 4))
        mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
        check_op_gradients(lambda ts: scalarize(masked_mean(ts[0], mask)), [emb])

    def test_embedding_lookup_and_scatter_gradient(self):
        table = Tensor(RNG.normal(size=(5, 3)), requires_grad=True)
        ids = np.array([[0, 2, 2]])
        out = embedding_lookup(table, ids)
        assert np.array_equal(out.data[0, 1], table.data[2])
        backward_from(out, np.ones((1, 3, 3)))
        assert np.allclose(table.grad[2], 2.0)  # used twice
        assert np.allclose(table.grad[1], 0.0)  # unused row
        assert np.allclose(table.grad[4], 0.0)

    def test_embedding_lookup_out_of_range(self):
        with pytest.raises(VocabularyError):
            embedding_lookup(Tensor(np.zeros((3, 2))), np.array([[0, 3]]))

    def test_embedding_gradients_match_finite_differences(self):
        table = RNG.normal(size=(6, 3))
        ids = np.array([[1, 4, 1], [0, 5, 2]])
        check_op_gradients(
            lambda ts: scalarize(embedding_lookup(ts[0], ids)), [table])


class TestLosses:
    def test_uniform_logits(self):
        loss = cross_entropy(Tensor([[0.0, 0.0, 0.0]]), np.array([1]))
        assert abs(loss.item() - np.log(3)) < 1e-12

    def test_saturated_correct_class(self):
        loss = cross_entropy(Tensor([[1000.0, 0.0, 0.0]]), np.array([0]))
        assert loss.item() < 1e-12

    def test_log_sum_exp_oracle_value(self):
        # hand calculation: lse(1, 2, 0.5) = 2 + ln(e^-1 + 1 + e^-1.5)
        logits = np.array([[1.0, 2.0, 0.5]])
        expected = (2.0 + np.log(np.exp(-1.0) + 1.0 + np.exp(-1.5))) - 2.0
        loss = cross_entropy(Tensor(logits), np.array([1]))
        assert abs(loss.item() - expected) < 1e-12

    def test_out_of_range_target_names_index(self):
        with pytest.raises(LabelError, match="index 1"):
            cross_entropy(Tensor(np.zeros((3, 3))), np.array([0, 5, 1]))

    def test_bce_half(self):
        loss = binary_cross_entropy(Tensor([[0.0]]), np.array([[1.0]]))
        assert abs(loss.item() - np.log(2)) < 1e-12

    def test_bce_stable_at_large_logit(self):
        loss = binary_cross_entropy(Tensor([[50.0]]), np.array([[1.0]]))
        assert 0 <= loss.item() < 1e-12

    def test_bce_matches_per_element_oracle(self):
        z = RNG.normal(size=(2, 3)) * 3
        t = (RNG.random((2, 3)) > 0.5).astype(float)
        sig = 1 / (1 + np.exp(-z))
        expected = -(t * np.log(sig) + (1 - t) * np.log(1 - sig)).mean()
        loss = binary_cross_entropy(Tensor(z), t)
        assert abs(loss.item() - expected) < 1e-10

    def test_bce_rejects_non_binary(self):
        with pytest.raises(LabelError):
            binary_cross_entropy(Tensor(np.zeros((1, 2))), np.array([[0.5, 1.0]]))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40)
    def test_loss_non_negativity(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(scale=4.0, size=(3, 4))
        targets = rng.integers(0, 4, size=3)
        assert cross_entropy(Tensor(z), targets).item() >= 0.0
        flags = rng.integers(0, 2, size=(3, 4)).astype(float)
        assert binary_cross_entropy(Tensor(z), flags).item() >= 0.0

    def test_loss_gradients_match_finite_differences(self):
        z = RNG.normal(size=(4, 3))
        targets = np.array([0, 2, 1, 1])
        check_op_gradients(lambda ts: cross_entropy(ts[0], targets), [z])
        flags = (RNG.random((4, 3)) > 0.5).astype(float)
        check_op_gradients(lambda ts: binary_cross_entropy(ts[0], flags), [z])

    def test_grouped_cross_entropy_matches_blockwise(self):
        z = RNG.normal(size=(2, 6))
        t = np.array([[0, 2], [1, 1]])
        loss = grouped_cross_entropy(Tensor(z), t, groups=2)
        pieces = []
        for g in range(2):
            block = z[:, 3 * g:3 * g + 3]
            lse = np.log(np.exp(block).sum(axis=1))
            pieces.append(lse - block[np.arange(2), t[:, g]])
        assert abs(loss.item() - np.mean(pieces)) < 1e-10

    def test_grouped_cross_entropy_gradients(self):
        z = RNG.normal(size=(3, 9))
        t = RNG.integers(0, 3, size=(3, 3))
        check_op_gradients(lambda ts: grouped_cross_entropy(ts[0], t, groups=3), [z])

    def test_loss_weight_scales_value_and_gradient(self):
        z = RNG.normal(size=(2, 3))
        targets = np.array([0, 1])
        t1 = Tensor(z.copy(), requires_grad=True)
        t2 = Tensor(z.copy(), requires_grad=True)
        l1, l2 = cross_entropy(t1, targets), cross_entropy(t2, targets, weight=2.5)
        backward(l1)
        backward(l2)
        assert abs(l2.item() - 2.5 * l1.item()) < 1e-12
        assert np.allclose(t2.grad, 2.5 * t1.grad)
