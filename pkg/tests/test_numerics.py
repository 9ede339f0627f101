from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from avdwf.errors import ConfigError, NonFiniteError, ShapeError
from avdwf.numerics import (
    AttentionParams,
    LinearLayer,
    Tensor,
    attention_weights,
    bce_with_logits,
    concat,
    decode_checkpoint,
    encode_checkpoint,
    gradcheck,
    layer_norm,
    log,
    matmul,
    multi_head_self_attention,
    no_grad,
    relative_error,
    softmax,
)


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[3], [4]])

    def test_row_times_column(self):
        assert matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data.tolist() == [[11.0]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        res = gradcheck(matmul, [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))],
                        tol=1e-6, rng=rng, name="matmul")
        assert res.passed, res

    def test_batched_broadcast_gradient(self):
        rng = np.random.default_rng(4)
        res = gradcheck(matmul, [rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))], rng=rng)
        assert res.passed, res


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_array_equal(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_large_equal_inputs_do_not_overflow(self):
        np.testing.assert_array_equal(softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_against_high_precision(self):
        getcontext().prec = 50
        xs = [Decimal(1), Decimal(2), Decimal(3)]
        es = [x.exp() for x in xs]
        expected = [float(e / sum(es)) for e in es]
        got = softmax(Tensor([1.0, 2.0, 3.0])).data
        assert np.max(np.abs(got - expected)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 8)),
                  elements=st.floats(-50, 50)))
    def test_rows_sum_to_one_and_positive(self, x):
        out = softmax(Tensor(x), axis=-1).data
        assert np.all(out > 0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12, rtol=0)

    def test_gradient(self):
        rng = np.random.default_rng(5)
        res = gradcheck(lambda x: softmax(x, axis=-1), [rng.normal(size=(3, 5))], rng=rng)
        assert res.passed, res


class TestLayerNorm:
    def test_constant_row_maps_to_beta(self):
        out = layer_norm(Tensor([[5.0, 5.0, 5.0]]), np.ones(3), np.zeros(3))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0]])

    def test_already_normalized(self):
        out = layer_norm(Tensor([1.0, -1.0]), np.ones(2), np.zeros(2), eps=1e-14)
        np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-12)

    def test_default_eps_variance(self):
        # output variance is var / (var + eps) for the default eps
        x = np.array([0.3, -1.2, 2.0, 0.7])
        out = layer_norm(Tensor(x), np.ones(4), np.zeros(4)).data
        assert out.var() == pytest.approx(x.var() / (x.var() + 1e-5), rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 12)),
                  elements=st.floats(-100, 100)))
    def test_row_statistics(self, x):
        x = x[x.std(axis=-1) > 1e-3]
        if x.size == 0:
            return
        out = layer_norm(Tensor(x), np.ones(x.shape[-1]), np.zeros(x.shape[-1]), eps=1e-14).data
        assert np.max(np.abs(out.mean(axis=-1))) < 1e-10
        assert np.max(np.abs(out.var(axis=-1) - 1.0)) < 1e-8

    def test_gradient(self):
        rng = np.random.default_rng(6)
        res = gradcheck(lambda x, g, b: layer_norm(x, g, b),
                        [rng.normal(size=(4, 8)), rng.normal(size=8), rng.normal(size=8)],
                        tol=1e-6, rng=rng)
        assert res.passed, res


def _attn(d=4, heads=2, seed=0):
    return AttentionParams(d, heads, np.random.default_rng(seed))


class TestSelfAttention:
    def test_single_token_is_value_projection(self):
        p = _attn(seed=1)
        x = np.random.default_rng(2).normal(size=(1, 4))
        assert attention_weights(Tensor(x), p).data.tolist() == [[[1.0]], [[1.0]]]
        expected = p.o(p.v(Tensor(x))).data
        np.testing.assert_allclose(multi_head_self_attention(Tensor(x), p).data, expected,
                                   atol=1e-14)

    def test_identical_tokens_attend_uniformly(self):
        p = _attn(seed=3)
        x = np.tile(np.random.default_rng(4).normal(size=(1, 4)), (5, 1))
        w = attention_weights(Tensor(x), p).data
        np.testing.assert_allclose(w, 1.0 / 5, atol=1e-15)

    def test_matches_scalar_oracle(self):
        p = _attn(seed=7)
        for name in ("q", "k", "v", "o"):
            getattr(p, name).bias.data = np.random.default_rng(8).normal(size=4)
        x = np.random.default_rng(9).normal(size=(3, 4))
        expected = oracles.msa_tokens(x.tolist(), p, 2)
        got = multi_head_self_attention(Tensor(x), p).data
        assert np.max(np.abs(got - np.array(expected))) < 1e-10

    def test_heads_must_divide_dim(self):
        with pytest.raises(ConfigError):
            AttentionParams(6, 4, np.random.default_rng(0))

    def test_output_shape_and_batching(self):
        p = _attn(seed=1)
        x = np.random.default_rng(1).normal(size=(2, 3, 4))
        out = multi_head_self_attention(Tensor(x), p).data
        assert out.shape == x.shape
        np.testing.assert_allclose(out[1], multi_head_self_attention(Tensor(x[1]), p).data,
                                   atol=1e-14)

    def test_gradient_through_inputs_and_weights(self):
        p = _attn(seed=2)
        rng = np.random.default_rng(3)

        original = p.q.weight

        def fn(x, wq):
            p.q.weight = wq
            try:
                return multi_head_self_attention(x, p)
            finally:
                p.q.weight = original

        res = gradcheck(fn, [rng.normal(size=(3, 4)), rng.normal(size=(4, 4))], rng=rng)
        assert res.passed, res


class TestAutodiff:
    def test_shared_subexpression_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        y = x * x + x
        y.sum().backward()
        assert x.grad.tolist() == [5.0]

    def test_no_grad_builds_no_graph(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 3
        assert not y.requires_grad

    def test_non_finite_is_an_error(self):
        with pytest.raises(NonFiniteError):
            log(Tensor([0.0]))

    def test_concat_and_bce_gradients(self):
        rng = np.random.default_rng(11)
        targets = np.array([0, 1, 1])
        res = gradcheck(lambda a, b: bce_with_logits(concat([a, b], axis=0), targets),
                        [rng.normal(size=1), rng.normal(size=2)], rng=rng)
        assert res.passed, res

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-12) == 0.0
        assert relative_error(1.0, 1.0 + 1e-6) == pytest.approx(1e-6, rel=1e-3)


class TestLinearLayer:
    def test_init_bounds_and_zero_bias(self):
        layer = LinearLayer(16, 3, np.random.default_rng(0))
        assert np.all(np.abs(layer.weight.data) <= 1 / 4)
        assert np.all(layer.bias.data == 0)
        assert [n for n, _ in layer.named_parameters()] == ["weight", "bias"]


class TestCheckpoint:
    def test_bit_exact_round_trip(self):
        rng = np.random.default_rng(0)
        arrays = [("a", rng.normal(size=(2, 3))), ("b.c", np.array([np.pi, -0.0, 1e-300])),
                  ("scalar", np.array(2.5))]
        raw = encode_checkpoint(arrays, {"note": "x"})
        back, meta = decode_checkpoint(raw)
        assert meta == {"note": "x"}
        for (n1, a1), (n2, a2) in zip(arrays, back):
            assert n1 == n2
            assert a1.shape == a2.shape
            assert a1.tobytes() == a2.tobytes()
        assert encode_checkpoint(back, meta) == raw

    def test_header_offsets_and_little_endian(self):
        raw = encode_checkpoint([("x", np.array([1.0])), ("y", np.array([2.0, 3.0]))])
        import json
        import struct
        (n,) = struct.unpack_from("<Q", raw)
        header = json.loads(raw[8:8 + n])
        assert [t["offset"] for t in header["tensors"]] == [0, 8]
        assert raw[8 + n:8 + n + 8] == struct.pack("<d", 1.0)
