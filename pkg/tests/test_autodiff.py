import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import backprop_grads, fd_grads, rel_err
from crossmpt import autodiff as ad
from crossmpt.masks import NEG_INF


def rand(rng, *shape):
    return rng.standard_normal(shape)


class TestMatmul:
    def test_times_identity(self):
        rng = np.random.default_rng(0)
        a = rand(rng, 3, 4)
        out = ad.matmul(ad.constant(a), ad.constant(np.eye(4)))
        assert np.array_equal(out.data, a)

    def test_hand_computed_2x2(self):
        a = ad.constant([[1.0, 2.0], [3.0, 4.0]])
        b = ad.constant([[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal(ad.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        params = {"a": ad.parameter(rand(rng, 4, 3)), "b": ad.parameter(rand(rng, 3, 5))}
        w = rand(rng, 4, 5)

        def fn(build=False):
            out = ad.reduce_sum(ad.mul(ad.matmul(params["a"], params["b"]), ad.constant(w)))
            return out if build else out.item()

        bp = backprop_grads(params, fn)
        fd = fd_grads(params, fn)
        assert rel_err(bp["a"], fd["a"]) < 1e-6
        assert rel_err(bp["b"], fd["b"]) < 1e-6

    def test_batched_matmul_shared_weight_grad(self):
        rng = np.random.default_rng(2)
        params = {"w": ad.parameter(rand(rng, 3, 2))}
        x = rand(rng, 5, 4, 3)

        def fn(build=False):
            out = ad.reduce_sum(ad.matmul(ad.constant(x), params["w"]))
            return out if build else out.item()

        bp = backprop_grads(params, fn)
        fd = fd_grads(params, fn)
        assert rel_err(bp["w"], fd["w"]) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))


class TestMaskedSoftmax:
    def test_uniform_logits_no_mask(self):
        out = ad.masked_softmax(ad.constant(np.zeros((1, 4))), np.zeros((1, 4)))
        assert np.array_equal(out.data, np.full((1, 4), 0.25))

    def test_single_masked_column_exact(self):
        out = ad.masked_softmax(ad.constant([[1.7, 0.3]]), np.array([[0.0, NEG_INF]]))
        assert np.array_equal(out.data, [[1.0, 0.0]])

    def test_matches_dense_softmax_on_kept_columns(self):
        # oracle: delete masked columns, dense softmax, re-embed zeros
        rng = np.random.default_rng(3)
        logits = rand(rng, 6, 9)
        support = rng.integers(0, 2, size=(6, 9)).astype(bool)
        support[:, 0] = True  # no fully-masked rows
        additive = np.where(support, 0.0, NEG_INF)
        out = ad.masked_softmax(ad.constant(logits), additive).data
        for i in range(6):
            kept = logits[i, support[i]]
            dense = np.exp(kept - kept.max())
            dense /= dense.sum()
            expected = np.zeros(9)
            expected[support[i]] = dense
            np.testing.assert_allclose(out[i], expected, rtol=1e-12, atol=0)

    def test_masked_positions_weight_and_grad_exactly_zero(self):
        rng = np.random.default_rng(4)
        logits = ad.parameter(rand(rng, 5, 7))
        support = rng.integers(0, 2, size=(5, 7)).astype(bool)
        support[:, 3] = True
        additive = np.where(support, 0.0, NEG_INF)
        out = ad.masked_softmax(logits, additive)
        assert (out.data[~support] == 0.0).all()
        assert abs(out.data.sum(axis=-1) - 1.0).max() < 1e-12
        ad.reduce_sum(ad.mul(out, ad.constant(rand(rng, 5, 7)))).backward()
        assert (logits.grad[~support] == 0.0).all()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        support = rng.integers(0, 2, size=(4, 6)).astype(bool)
        support[:, 1] = True
        additive = np.where(support, 0.0, NEG_INF)
        w = rand(rng, 4, 6)
        params = {"x": ad.parameter(rand(rng, 4, 6))}

        def fn(build=False):
            out = ad.reduce_sum(ad.mul(ad.masked_softmax(params["x"], additive), ad.constant(w)))
            return out if build else out.item()

        assert rel_err(backprop_grads(params, fn)["x"], fd_grads(params, fn)["x"]) < 1e-5

    def test_fully_masked_row_raises(self):
        with pytest.raises(ValueError, match="fully masked"):
            ad.masked_softmax(ad.constant(np.zeros((1, 3))), np.full((1, 3), NEG_INF))


class TestLayerNorm:
    def test_constant_row_returns_bias(self):
        x = ad.constant(np.full((2, 8), 3.7))
        gain = ad.constant(np.full(8, 2.0))
        bias = ad.constant(np.arange(8.0))
        out = ad.layer_norm(x, gain, bias)
        np.testing.assert_allclose(out.data, np.tile(np.arange(8.0), (2, 1)), atol=1e-12)

    def test_already_normalized_row_unchanged(self):
        row = np.array([1.0, -1.0, 1.0, -1.0])
        out = ad.layer_norm(ad.constant(row[None]), ad.constant(np.ones(4)), ad.constant(np.zeros(4)))
        np.testing.assert_allclose(out.data, row[None], atol=1e-5)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        params = {
            "x": ad.parameter(rand(rng, 3, 5)),
            "gain": ad.parameter(rand(rng, 5)),
            "bias": ad.parameter(rand(rng, 5)),
        }
        w = rand(rng, 3, 5)

        def fn(build=False):
            out = ad.reduce_sum(
                ad.mul(ad.layer_norm(params["x"], params["gain"], params["bias"]), ad.constant(w))
            )
            return out if build else out.item()

        bp, fd = backprop_grads(params, fn), fd_grads(params, fn)
        for key in params:
            assert rel_err(bp[key], fd[key]) < 1e-5


class TestFfn:
    def test_zero_input_zero_biases_gives_zero(self):
        z2 = ad.constant(np.zeros((3, 4)))
        out = ad.ffn(z2, ad.constant(np.ones((4, 8))), ad.constant(np.zeros(8)),
                     ad.constant(np.ones((8, 4))), ad.constant(np.zeros(4)))
        assert np.array_equal(out.data, np.zeros((3, 4)))

    def test_identity_second_layer_acts_as_activated_projection(self):
        rng = np.random.default_rng(7)
        x = rand(rng, 2, 3)
        w1 = rand(rng, 3, 3)
        out = ad.ffn(ad.constant(x), ad.constant(w1), ad.constant(np.zeros(3)),
                     ad.constant(np.eye(3)), ad.constant(np.zeros(3)))
        np.testing.assert_allclose(out.data, ad.gelu(ad.constant(x @ w1)).data, rtol=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(8)
        params = {
            "w1": ad.parameter(rand(rng, 4, 8)),
            "b1": ad.parameter(rand(rng, 8)),
            "w2": ad.parameter(rand(rng, 8, 4)),
            "b2": ad.parameter(rand(rng, 4)),
        }
        x = rand(rng, 3, 4)
        w = rand(rng, 3, 4)

        def fn(build=False):
            out = ad.reduce_sum(ad.mul(
                ad.ffn(ad.constant(x), params["w1"], params["b1"], params["w2"], params["b2"]),
                ad.constant(w)))
            return out if build else out.item()

        bp, fd = backprop_grads(params, fn), fd_grads(params, fn)
        for key in params:
            assert rel_err(bp[key], fd[key]) < 1e-5


class TestPrimitiveGradients:
    """Every differentiable primitive passes central finite differences."""

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_gelu_gradient(self, seed):
        rng = np.random.default_rng(seed)
        params = {"x": ad.parameter(rng.standard_normal((2, 5)) * 2)}
        w = rng.standard_normal((2, 5))

        def fn(build=False):
            out = ad.reduce_sum(ad.mul(ad.gelu(params["x"]), ad.constant(w)))
            return out if build else out.item()

        # floor keeps near-zero entries on an absolute scale (FD noise ~1e-10)
        assert rel_err(backprop_grads(params, fn)["x"], fd_grads(params, fn)["x"], floor=1e-4) < 1e-5

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_softplus_gradient(self, seed):
        rng = np.random.default_rng(seed)
        params = {"x": ad.parameter(rng.standard_normal((3, 4)) * 5)}
        w = rng.standard_normal((3, 4))

        def fn(build=False):
            out = ad.reduce_sum(ad.mul(ad.softplus(params["x"]), ad.constant(w)))
            return out if build else out.item()

        assert rel_err(backprop_grads(params, fn)["x"], fd_grads(params, fn)["x"], floor=1e-4) < 1e-5

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_composite_random_graph(self, seed):
        rng = np.random.default_rng(seed)
        params = {"x": ad.parameter(rand(rng, 3, 4))}
        w = rand(rng, 3, 4)

        def fn(build=False):
            t = params["x"]
            t = ad.add(t, ad.gelu(t))
            t = ad.mul(t, ad.softplus(ad.neg(t)))
            t = ad.add(ad.scale(t, 0.7), ad.transpose(ad.constant(w.T)))
            t = ad.concat([t, ad.narrow(t, 0, 2, axis=-2)], axis=-2)
            out = ad.reduce_sum(ad.mul(t, t))
            return out if build else out.item()

        assert rel_err(backprop_grads(params, fn)["x"], fd_grads(params, fn)["x"]) < 1e-5

    def test_reshape_and_narrow_grads(self):
        rng = np.random.default_rng(9)
        params = {"x": ad.parameter(rand(rng, 2, 3, 4))}

        def fn(build=False):
            t = ad.reshape(params["x"], (2, 12))
            t = ad.narrow(t, 2, 9, axis=-1)
            out = ad.reduce_sum(ad.mul(t, t))
            return out if build else out.item()

        assert rel_err(backprop_grads(params, fn)["x"], fd_grads(params, fn)["x"]) < 1e-6


class TestBackwardContract:
    def test_repeated_backward_raises(self):
        x = ad.parameter(np.ones((2, 2)))
        out = ad.reduce_sum(ad.mul(x, x))
        out.backward()
        with pytest.raises(RuntimeError, match="already"):
            out.backward()

    def test_shared_subgraph_second_backward_raises(self):
        x = ad.parameter(np.ones((2, 2)))
        shared = ad.mul(x, x)
        first = ad.reduce_sum(shared)
        second = ad.reduce_sum(ad.add(shared, shared))
        first.backward()
        with pytest.raises(RuntimeError):
            second.backward()

    def test_grad_accumulates_across_fresh_graphs(self):
        x = ad.parameter(np.ones(3))
        ad.reduce_sum(ad.mul(x, ad.constant(np.ones(3)))).backward()
        ad.reduce_sum(ad.mul(x, ad.constant(np.ones(3)))).backward()
        assert np.array_equal(x.grad, np.full(3, 2.0))

    def test_nonscalar_backward_needs_seed(self):
        x = ad.parameter(np.ones((2, 2)))
        with pytest.raises(ValueError):
            ad.mul(x, x).backward()
