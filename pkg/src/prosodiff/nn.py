"""Neural layers built on the autodiff Tensor: dense, layer norm, multi-head
self-attention with pre-norm residual blocks, and sinusoidal encodings."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor, concat


class Module:
    """Base with recursive parameter discovery over attributes."""

    def parameters(self):
        params = []
        for value in vars(self).values():
            params.extend(_collect(value))
        return params

    def named_parameters(self, prefix: str = ""):
        named = {}
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            _collect_named(value, name, named)
        return named

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, arrays):
        named = self.named_parameters()
        missing = set(named) - set(arrays)
        if missing:
            raise KeyError(f"state dict missing parameters: {sorted(missing)}")
        for name, param in named.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != param.data.shape:
                raise ShapeError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model shape {param.data.shape}"
                )
            param.data = arr.copy()


def _collect(value):
    if isinstance(value, Tensor):
        return [value] if value.requires_grad else []
    if isinstance(value, Module):
        return value.parameters()
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out.extend(_collect(v))
        return out
    return []


def _collect_named(value, name, named):
    if isinstance(value, Tensor):
        if value.requires_grad:
            named[name] = value
    elif isinstance(value, Module):
        named.update(value.named_parameters(prefix=name + "."))
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _collect_named(v, f"{name}.{i}", named)


def _param(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    scale = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


class Dense(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 zero_init: bool = False):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if zero_init:
            self.weight = Tensor(np.zeros((in_dim, out_dim)), requires_grad=True)
        else:
            self.weight = _param(rng, in_dim, (in_dim, out_dim))
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(
                f"dense expects last dim {self.in_dim}, got input shape {x.shape}"
            )
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.dim = dim
        self.eps = eps
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.offset = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dim:
            raise ShapeError(f"layernorm dim {self.dim} vs input shape {x.shape}")
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * (var + self.eps) ** -0.5 * self.gain + self.offset


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over [..., seq, dim]."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Dense(dim, dim, rng)
        self.wk = Dense(dim, dim, rng)
        self.wv = Dense(dim, dim, rng)
        self.wo = Dense(dim, dim, rng)
        self.last_weights = None  # numpy copy of the most recent attention map

    def __call__(self, x: Tensor) -> Tensor:
        seq = x.shape[-2]
        lead = x.shape[:-2]

        def split(t: Tensor) -> Tensor:
            t = t.reshape(lead + (seq, self.heads, self.head_dim))
            return t.swapaxes(-3, -2)  # [..., heads, seq, head_dim]

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.head_dim))
        weights = scores.softmax(axis=-1)
        self.last_weights = weights.data.copy()
        ctx = weights @ v
        ctx = ctx.swapaxes(-3, -2).reshape(lead + (seq, self.dim))
        return self.wo(ctx)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Dense(dim, hidden, rng)
        self.fc2 = Dense(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())


class AttentionBlock(Module):
    """Pre-norm residual block: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 ff_mult: int = 2):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ff = FeedForward(dim, dim * ff_mult, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.ff(self.ln2(x))


def sinusoidal_encoding(positions: np.ndarray, dim: int) -> np.ndarray:
    """Standard interleaved sin/cos encoding for positions (or timesteps)."""
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = positions[..., None] * freqs
    enc = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    if dim % 2:
        enc = np.concatenate([enc, np.zeros(enc.shape[:-1] + (1,))], axis=-1)
    return enc


__all__ = [
    "Module", "Dense", "LayerNorm", "MultiHeadSelfAttention", "FeedForward",
    "AttentionBlock", "sinusoidal_encoding", "concat",
]
