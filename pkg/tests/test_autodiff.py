"""Autodiff engine: forward definitions against hand values, every backward
rule against central finite differences (h = 1e-5, 64-bit)."""

import numpy as np
import pytest
from helpers import check_grads, random_weighting

from agresnet import autodiff as ad
from agresnet.autodiff import (
    BatchNormState,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    load_tensors,
    save_tensors,
)


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestForwardValues:
    def test_leaky_relu_negative(self):
        out = ad.leaky_relu(Tensor([-1.0]), 0.01)
        np.testing.assert_allclose(out.data, [-0.01])

    def test_leaky_relu_positive_passthrough(self):
        out = ad.leaky_relu(Tensor([2.5]), 0.01)
        np.testing.assert_allclose(out.data, [2.5])

    def test_softmax_equal_logits(self):
        out = ad.softmax(Tensor([[3.0, 3.0, 3.0, 3.0]]), axis=1)
        np.testing.assert_allclose(out.data, [[0.25, 0.25, 0.25, 0.25]])

    def test_softmax_sums_to_one(self):
        """Normalization holds for any finite input, including huge logits."""
        rng = np.random.default_rng(0)
        for scale in (1.0, 100.0, 10000.0):
            x = Tensor(scale * rng.standard_normal((5, 7)))
            out = ad.softmax(x, axis=1)
            np.testing.assert_allclose(out.data.sum(axis=1), np.ones(5), atol=1e-9)

    def test_batch_norm_training_moments(self):
        """A batch with mean 3, variance 4 normalizes to mean 0, variance ~1."""
        rng = np.random.default_rng(1)
        x = rng.standard_normal((500, 4))
        x = (x - x.mean(axis=0)) / x.std(axis=0) * 2.0 + 3.0
        state = BatchNormState(4)
        out = ad.batch_norm(Tensor(x), state, training=True)
        np.testing.assert_allclose(out.data.mean(axis=0), np.zeros(4), atol=1e-5)
        np.testing.assert_allclose(out.data.var(axis=0), np.ones(4), atol=1e-4)

    def test_batch_norm_inference_is_affine(self):
        """Inference mode has no batch coupling: permuting rows permutes outputs."""
        rng = np.random.default_rng(2)
        state = BatchNormState(3)
        state.running_mean = rng.standard_normal(3)
        state.running_var = rng.uniform(0.5, 2.0, 3)
        x = rng.standard_normal((6, 3))
        out = ad.batch_norm(Tensor(x), state, training=False).data
        perm = rng.permutation(6)
        out_perm = ad.batch_norm(Tensor(x[perm]), state, training=False).data
        np.testing.assert_array_equal(out_perm, out[perm])

    def test_masked_pair_max_values(self):
        x = Tensor(np.array([[[3.0], [5.0], [-2.0], [-7.0]]]))
        out = ad.masked_pair_max(x, np.zeros(4, dtype=bool))
        np.testing.assert_allclose(out.data, [[[5.0], [-2.0]]])

    def test_masked_pair_max_fake_excluded(self):
        """A fake slot never wins the max, even against negative values."""
        x = Tensor(np.array([[[-4.0], [0.0]]]))
        out = ad.masked_pair_max(x, np.array([False, True]))
        np.testing.assert_allclose(out.data, [[[-4.0]]])

    def test_masked_pair_max_both_fake_zero(self):
        x = Tensor(np.array([[[9.0], [8.0]]]))
        out = ad.masked_pair_max(x, np.array([True, True]))
        np.testing.assert_allclose(out.data, [[[0.0]]])

    def test_cross_entropy_label_out_of_range(self):
        with pytest.raises(ValueError, match="label"):
            ad.cross_entropy_logits(Tensor(np.zeros((2, 4))), np.array([0, 4]))


class TestBackwardBasics:
    def test_sum_grad_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with Tape() as tape:
            tape.backward(ad.sum_(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_sum_of_squares_grad(self):
        x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
        with Tape() as tape:
            tape.backward(ad.sum_(ad.mul(x, x)))
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_backward_twice_is_error(self):
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_(x)
            tape.backward(loss)
            with pytest.raises(TapeError, match="consumed"):
                tape.backward(loss)

    def test_non_scalar_loss_is_error(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = ad.mul(x, x)
            with pytest.raises(TapeError, match="scalar"):
                tape.backward(y)

    def test_masked_pair_max_no_grad_into_fakes(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((2, 8, 3)), requires_grad=True)
        mask = np.array([False, True, False, False, True, True, False, False])
        with Tape() as tape:
            out = ad.masked_pair_max(x, mask)
            tape.backward(ad.sum_(out))
        assert np.all(x.grad[:, mask, :] == 0.0)

    def test_max_tie_gradient_to_lower_index(self):
        x = Tensor(np.array([[[2.0], [2.0]]]), requires_grad=True)
        with Tape() as tape:
            tape.backward(ad.sum_(ad.masked_pair_max(x, np.zeros(2, dtype=bool))))
        np.testing.assert_array_equal(x.grad[0, :, 0], [1.0, 0.0])


class TestShapeErrors:
    def test_matmul_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_add_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)))

    def test_pool_odd_nodes_is_error(self):
        with pytest.raises(ShapeError, match="even"):
            ad.masked_pair_max(Tensor(np.zeros((1, 3, 2))), np.zeros(3, dtype=bool))


class TestGradientChecks:
    """Central finite differences vs the recorded backward rules."""

    def test_matmul_2d(self):
        rng = np.random.default_rng(10)
        a, b = leaf(rng, 4, 3), leaf(rng, 3, 5)
        r = random_weighting(rng, (4, 5))
        check_grads(lambda: ad.sum_(ad.mul(ad.matmul(a, b), r)), [a, b])

    def test_matmul_batched_times_2d(self):
        rng = np.random.default_rng(11)
        a, b = leaf(rng, 2, 5, 3), leaf(rng, 3, 4)
        r = random_weighting(rng, (2, 5, 4))
        check_grads(lambda: ad.sum_(ad.mul(ad.matmul(a, b), r)), [a, b])

    def test_matmul_constant_graph_times_batch(self):
        rng = np.random.default_rng(12)
        lap = Tensor(rng.standard_normal((5, 5)))
        x = leaf(rng, 3, 5, 2)
        r = random_weighting(rng, (3, 5, 2))
        check_grads(lambda: ad.sum_(ad.mul(ad.matmul(lap, x), r)), [x])

    def test_add_broadcast_bias(self):
        rng = np.random.default_rng(13)
        a, b = leaf(rng, 2, 4, 3), leaf(rng, 3)
        r = random_weighting(rng, (2, 4, 3))
        check_grads(lambda: ad.sum_(ad.mul(ad.add(a, b), r)), [a, b])

    def test_mul_broadcast(self):
        rng = np.random.default_rng(14)
        a, b = leaf(rng, 2, 4, 1), leaf(rng, 2, 4, 3)
        r = random_weighting(rng, (2, 4, 3))
        check_grads(lambda: ad.sum_(ad.mul(ad.mul(a, b), r)), [a, b])

    def test_smul(self):
        rng = np.random.default_rng(15)
        a = leaf(rng, 3, 3)
        check_grads(lambda: ad.sum_(ad.smul(a, -2.5)), [a])

    def test_tanh(self):
        rng = np.random.default_rng(16)
        a = leaf(rng, 4, 2)
        r = random_weighting(rng, (4, 2))
        check_grads(lambda: ad.sum_(ad.mul(ad.tanh(a), r)), [a])

    def test_leaky_relu(self):
        rng = np.random.default_rng(17)
        a = Tensor(rng.standard_normal((5, 4)) + 0.2, requires_grad=True)
        a.data[np.abs(a.data) < 1e-3] = 0.5  # keep clear of the kink
        r = random_weighting(rng, (5, 4))
        check_grads(lambda: ad.sum_(ad.mul(ad.leaky_relu(a, 0.01), r)), [a])

    def test_softmax_axis1(self):
        rng = np.random.default_rng(18)
        a = leaf(rng, 3, 6)
        r = random_weighting(rng, (3, 6))
        check_grads(lambda: ad.sum_(ad.mul(ad.softmax(a, axis=1), r)), [a])

    def test_softmax_node_axis_3d(self):
        rng = np.random.default_rng(19)
        a = leaf(rng, 2, 5, 1)
        r = random_weighting(rng, (2, 5, 1))
        check_grads(lambda: ad.sum_(ad.mul(ad.softmax(a, axis=1), r)), [a])

    def test_sum_axis_keepdims(self):
        rng = np.random.default_rng(20)
        a = leaf(rng, 3, 4, 2)
        r = random_weighting(rng, (3, 1, 2))
        check_grads(lambda: ad.sum_(ad.mul(ad.sum_(a, axis=1, keepdims=True), r)), [a])

    def test_mean_all(self):
        rng = np.random.default_rng(21)
        a = leaf(rng, 4, 3)
        check_grads(lambda: ad.mean_(a), [a])

    def test_reshape(self):
        rng = np.random.default_rng(22)
        a = leaf(rng, 2, 6)
        r = random_weighting(rng, (3, 4))
        check_grads(lambda: ad.sum_(ad.mul(ad.reshape(a, (3, 4)), r)), [a])

    def test_concat(self):
        rng = np.random.default_rng(23)
        a, b, c = leaf(rng, 2, 3, 2), leaf(rng, 2, 3, 4), leaf(rng, 2, 3, 1)
        r = random_weighting(rng, (2, 3, 7))
        check_grads(lambda: ad.sum_(ad.mul(ad.concat([a, b, c], axis=2), r)), [a, b, c])

    def test_masked_pair_max(self):
        rng = np.random.default_rng(24)
        a = leaf(rng, 2, 6, 3)
        mask = np.array([False, False, False, True, True, True])
        r = random_weighting(rng, (2, 3, 3))
        check_grads(lambda: ad.sum_(ad.mul(ad.masked_pair_max(a, mask), r)), [a])

    def test_batch_norm_training(self):
        rng = np.random.default_rng(25)
        a = leaf(rng, 8, 3)
        state = BatchNormState(3)
        state.gamma.data = rng.uniform(0.5, 1.5, 3)
        state.beta.data = rng.standard_normal(3)
        r = random_weighting(rng, (8, 3))

        def f():
            return ad.sum_(ad.mul(ad.batch_norm(a, state, training=True), r))

        check_grads(f, [a, state.gamma, state.beta])

    def test_batch_norm_training_3d(self):
        rng = np.random.default_rng(26)
        a = leaf(rng, 4, 5, 2)
        state = BatchNormState(2)
        r = random_weighting(rng, (4, 5, 2))

        def f():
            return ad.sum_(ad.mul(ad.batch_norm(a, state, training=True), r))

        check_grads(f, [a, state.gamma, state.beta])

    def test_batch_norm_inference(self):
        rng = np.random.default_rng(27)
        a = leaf(rng, 6, 3)
        state = BatchNormState(3)
        state.running_mean = rng.standard_normal(3)
        state.running_var = rng.uniform(0.5, 2.0, 3)
        r = random_weighting(rng, (6, 3))

        def f():
            return ad.sum_(ad.mul(ad.batch_norm(a, state, training=False), r))

        check_grads(f, [a, state.gamma, state.beta])

    def test_cross_entropy(self):
        rng = np.random.default_rng(28)
        logits = leaf(rng, 6, 4)
        labels = rng.integers(0, 4, size=6)
        check_grads(lambda: ad.cross_entropy_logits(logits, labels), [logits])


class TestCheckpointArchive:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(30)
        named = {
            "w": rng.standard_normal((3, 4)),
            "b": rng.standard_normal(4),
            "scalar": np.array(2.5),
        }
        path = tmp_path / "ck.agrn"
        save_tensors(path, named)
        loaded = load_tensors(path)
        assert set(loaded) == set(named)
        for key, arr in named.items():
            np.testing.assert_array_equal(loaded[key], np.asarray(arr))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.agrn"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_tensors(path)

    def test_f32_mode_selectable(self):
        ad.set_default_dtype("f32")
        try:
            assert Tensor([1.0]).data.dtype == np.float32
        finally:
            ad.set_default_dtype("f64")
        assert Tensor([1.0]).data.dtype == np.float64
