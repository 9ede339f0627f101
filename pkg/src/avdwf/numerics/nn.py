"""Parameter containers and the multi-head self-attention primitive."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor, as_tensor, layer_norm, matmul, softmax

LN_EPS = 1e-5


class Module:
    """Parameter container; parameters are discovered in attribute order.

    Attributes that are ``Tensor`` with ``requires_grad``, nested ``Module``
    instances, or lists of modules all contribute to ``named_parameters``.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class LinearLayer(Module):
    """y = x @ weight + bias, with weight stored as [in_dim, out_dim]."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(in_dim)
        self.weight = param(rng.uniform(-bound, bound, size=(in_dim, out_dim)))
        self.bias = param(np.zeros(out_dim)) if bias else None
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim == 1:
            y = matmul(x.reshape(1, x.shape[0]), self.weight).reshape(self.out_dim)
        else:
            y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNormParams(Module):
    def __init__(self, dim: int, eps: float = LN_EPS):
        self.gamma = param(np.ones(dim))
        self.beta = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class AttentionParams(Module):
    """Query/key/value/output projections for D-dim multi-head attention."""

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator):
        check_heads(dim, n_heads)
        self.q = LinearLayer(dim, dim, rng)
        self.k = LinearLayer(dim, dim, rng)
        self.v = LinearLayer(dim, dim, rng)
        self.o = LinearLayer(dim, dim, rng)
        self.n_heads = n_heads


def check_heads(dim: int, n_heads: int) -> int:
    if n_heads < 1 or dim % n_heads != 0:
        raise ConfigError(f"embedding dim {dim} is not divisible by {n_heads} heads")
    return dim // n_heads


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """[..., N, D] -> [..., H, N, D/H]"""
    *lead, n, d = x.shape
    return x.reshape(*lead, n, n_heads, d // n_heads).swapaxes(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """[..., H, N, d_h] -> [..., N, H*d_h]"""
    *lead, h, n, dh = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, n, h * dh)


def attention_weights(x: Tensor, params: AttentionParams) -> Tensor:
    """Per-head attention matrices, shape [..., H, N, N]."""
    d = x.shape[-1]
    dh = check_heads(d, params.n_heads)
    q = split_heads(params.q(x), params.n_heads)
    k = split_heads(params.k(x), params.n_heads)
    return softmax(matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh)), axis=-1)


def multi_head_self_attention(x, params: AttentionParams) -> Tensor:
    """Scaled dot-product self-attention over the token axis of ``x`` [..., N, D].

    The residual connection is left to the caller.
    """
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ConfigError("self-attention needs at least one token")
    attn = attention_weights(x, params)
    v = split_heads(params.v(x), params.n_heads)
    return params.o(merge_heads(matmul(attn, v)))
