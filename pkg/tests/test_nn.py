import numpy as np
import pytest

from prosodiff.autodiff import ShapeError, Tensor
from prosodiff.nn import (AttentionBlock, Dense, FeedForward, LayerNorm,
                          MultiHeadSelfAttention, sinusoidal_encoding)

from conftest import gradcheck


def test_dense_identity_weights_pass_input_through():
    rng = np.random.default_rng(0)
    layer = Dense(4, 4, rng)
    layer.weight.data = np.eye(4)
    layer.bias.data = np.zeros(4)
    x = rng.standard_normal((3, 4))
    out = layer(Tensor(x))
    assert np.array_equal(out.data, x)


def test_dense_bias_offsets_output():
    rng = np.random.default_rng(1)
    layer = Dense(2, 3, rng)
    layer.bias.data = np.array([1.0, 2.0, 3.0])
    zero = layer(Tensor(np.zeros((1, 2))))
    assert np.array_equal(zero.data[0], layer.bias.data)


def test_dense_rejects_wrong_input_dim():
    layer = Dense(4, 4, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        layer(Tensor(np.zeros((2, 5))))


def test_layernorm_output_statistics():
    ln = LayerNorm(8)
    x = np.random.default_rng(2).standard_normal((5, 8)) * 3 + 7
    out = ln(Tensor(x)).data
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-9)
    assert np.allclose(out.var(axis=-1), 1.0, atol=1e-4)


def test_layernorm_gain_offset():
    ln = LayerNorm(4)
    ln.gain.data = np.full(4, 2.0)
    ln.offset.data = np.full(4, 5.0)
    out = ln(Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))).data
    base = (np.array([1.0, 2.0, 3.0, 4.0]) - 2.5) / np.sqrt(1.25 + 1e-6)
    assert np.allclose(out[0], 2.0 * base + 5.0, atol=1e-12)


def test_attention_single_position_is_value_projection():
    # with one sequence position the softmax weight is exactly 1, so the
    # output reduces to wo(wv(x))
    rng = np.random.default_rng(3)
    attn = MultiHeadSelfAttention(8, 2, rng)
    x = Tensor(rng.standard_normal((1, 8)))
    out = attn(x)
    expected = attn.wo(attn.wv(x))
    assert np.allclose(out.data, expected.data, atol=1e-12)
    assert np.allclose(attn.last_weights, 1.0, atol=0)


def brute_force_attention(attn, x):
    def dense(layer, v):
        return v @ layer.weight.data + layer.bias.data

    seq, dim = x.shape
    h, hd = attn.heads, attn.head_dim
    q = dense(attn.wq, x).reshape(seq, h, hd).transpose(1, 0, 2)
    k = dense(attn.wk, x).reshape(seq, h, hd).transpose(1, 0, 2)
    v = dense(attn.wv, x).reshape(seq, h, hd).transpose(1, 0, 2)
    ctx = np.zeros((h, seq, hd))
    for head in range(h):
        scores = q[head] @ k[head].T / np.sqrt(hd)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        w = e / e.sum(axis=-1, keepdims=True)
        ctx[head] = w @ v[head]
    merged = ctx.transpose(1, 0, 2).reshape(seq, dim)
    return dense(attn.wo, merged)


def test_attention_matches_brute_force_oracle():
    rng = np.random.default_rng(4)
    attn = MultiHeadSelfAttention(8, 2, rng)
    x = rng.standard_normal((4, 8))
    out = attn(Tensor(x)).data
    assert np.allclose(out, brute_force_attention(attn, x), atol=1e-12)


def test_attention_weight_rows_sum_to_one():
    rng = np.random.default_rng(5)
    attn = MultiHeadSelfAttention(16, 4, rng)
    attn(Tensor(rng.standard_normal((2, 10, 16))))
    sums = attn.last_weights.sum(axis=-1)
    assert np.allclose(sums, 1.0, atol=1e-9)


def test_attention_permutation_equivariance():
    rng = np.random.default_rng(6)
    attn = MultiHeadSelfAttention(8, 2, rng)
    x = rng.standard_normal((6, 8))
    perm = rng.permutation(6)
    direct = attn(Tensor(x[perm])).data
    permuted = attn(Tensor(x)).data[perm]
    assert np.allclose(direct, permuted, atol=1e-9)


def test_attention_rejects_bad_head_count():
    with pytest.raises(ShapeError):
        MultiHeadSelfAttention(10, 3, np.random.default_rng(0))


def test_attention_block_residual_with_zero_inner_layers():
    rng = np.random.default_rng(7)
    block = AttentionBlock(8, 2, rng)
    for dense in (block.attn.wo, block.ff.fc2):
        dense.weight.data[:] = 0.0
        dense.bias.data[:] = 0.0
    x = rng.standard_normal((3, 8))
    out = block(Tensor(x)).data
    assert np.allclose(out, x, atol=1e-12)


def test_feedforward_relu_kills_negative_preactivations():
    rng = np.random.default_rng(8)
    ff = FeedForward(3, 4, rng)
    ff.fc1.weight.data[:] = 0.0
    ff.fc1.bias.data = np.array([-1.0, -2.0, -3.0, -4.0])
    out = ff(Tensor(rng.standard_normal((2, 3)))).data
    assert np.allclose(out, ff.fc2.bias.data, atol=1e-12)


def test_parameter_collection_counts():
    rng = np.random.default_rng(9)
    block = AttentionBlock(8, 2, rng)
    # 2 layernorms (2 params each) + 4 attn denses + 2 ff denses (2 each)
    assert len(block.parameters()) == 16
    named = block.named_parameters()
    assert "attn.wq.weight" in named and "ln2.offset" in named


def test_state_dict_roundtrip():
    rng = np.random.default_rng(10)
    src = AttentionBlock(8, 2, rng)
    dst = AttentionBlock(8, 2, np.random.default_rng(11))
    dst.load_state_dict(src.state_dict())
    x = Tensor(rng.standard_normal((4, 8)))
    assert np.array_equal(src(x).data, dst(x).data)


def test_load_state_dict_rejects_missing_keys():
    block = AttentionBlock(8, 2, np.random.default_rng(0))
    state = block.state_dict()
    state.pop("ln1.gain")
    with pytest.raises(KeyError):
        block.load_state_dict(state)


def test_sinusoidal_encoding_shape_and_identities():
    enc = sinusoidal_encoding(np.arange(10.0), 16)
    assert enc.shape == (10, 16)
    assert np.all(np.abs(enc) <= 1.0)
    # sin and cos halves square-sum to 1 per frequency
    assert np.allclose(enc[:, :8] ** 2 + enc[:, 8:] ** 2, 1.0, atol=1e-12)
    assert np.allclose(sinusoidal_encoding(np.zeros(1), 16)[0, 8:], 1.0)


def test_sinusoidal_encoding_odd_dim_padded():
    enc = sinusoidal_encoding(np.array([1.0, 2.0]), 9)
    assert enc.shape == (2, 9)
    assert np.array_equal(enc[:, -1], np.zeros(2))


def test_layer_gradients_match_finite_differences():
    rng = np.random.default_rng(12)
    layers = {
        "dense": Dense(6, 5, rng),
        "layernorm": LayerNorm(6),
        "attention": MultiHeadSelfAttention(6, 2, rng),
        "block": AttentionBlock(6, 2, rng),
    }
    x0 = rng.standard_normal((4, 6))
    for name, layer in layers.items():
        # project through fixed random coefficients so the loss is not
        # invariant to the layer's normalization
        probe = rng.standard_normal(layer(Tensor(x0)).shape)
        err = gradcheck(lambda t, l=layer, w=probe: (l(t) * w).sum(), x0)
        assert err < 1e-3, f"{name} input gradient off: {err}"
