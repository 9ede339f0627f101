"""Face and audio transformer encoders.

Both modalities share one code path: a per-step linear projection, a
learnable class token prepended at index 0, added positional embeddings, then
``L`` pre-LN self-attention blocks with residual connections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import (
    AttentionParams,
    LayerNormParams,
    LinearLayer,
    Module,
    Tensor,
    as_tensor,
    broadcast_to,
    check_heads,
    concat,
    gelu,
    multi_head_self_attention,
    param,
)


@dataclass
class FaceBlock:
    """T consecutive face crops, ``frames`` shaped [T, C, H, W] with values in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 3:
            frames = frames[:, None]
        if frames.ndim != 4 or frames.shape[0] < 1:
            raise ShapeError(f"face block must be [T, C, H, W], got {frames.shape}")
        self.frames = frames

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames.shape[1:]


@dataclass
class TokenSequence:
    """Embedded sequence [..., T+1, D]; row 0 is the class token."""

    tokens: Tensor

    @property
    def T(self) -> int:
        return self.tokens.shape[-2] - 1

    @property
    def dim(self) -> int:
        return self.tokens.shape[-1]


class MlpBlock(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.ln = LayerNormParams(dim)
        self.fc1 = LinearLayer(dim, hidden, rng)
        self.fc2 = LinearLayer(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(self.ln(x))))


class EncoderLayer(Module):
    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator, mlp_hidden: int = 0):
        self.ln = LayerNormParams(dim)
        self.attn = AttentionParams(dim, n_heads, rng)
        self.mlp = MlpBlock(dim, mlp_hidden, rng) if mlp_hidden else None


class EncoderParams(Module):
    """Projection, class token, positional table and the stack of attention layers."""

    def __init__(self, in_dim: int, seq_len: int, dim: int, n_layers: int, n_heads: int,
                 rng: np.random.Generator, mlp_hidden: int = 0):
        check_heads(dim, n_heads)
        if n_layers < 0:
            raise ConfigError("number of layers must be >= 0")
        self.proj = LinearLayer(in_dim, dim, rng)
        self.cls = param(rng.normal(0.0, 0.02, size=dim))
        self.pos = param(rng.normal(0.0, 0.02, size=(seq_len + 1, dim)))
        self.layers = [EncoderLayer(dim, n_heads, rng, mlp_hidden) for _ in range(n_layers)]
        self.n_heads = n_heads
        self.in_dim = in_dim
        self.seq_len = seq_len
        self.dim = dim


def embed_tokens(steps, params: EncoderParams) -> TokenSequence:
    """[..., T, in_dim] step features -> [..., T+1, D] with class token and E_p added."""
    steps = as_tensor(steps)
    if steps.shape[-1] != params.in_dim:
        raise ShapeError(f"step features have width {steps.shape[-1]}, projection expects "
                         f"{params.in_dim}")
    T = steps.shape[-2]
    if T + 1 != params.pos.shape[0]:
        raise ShapeError(f"sequence of {T} steps does not match positional table "
                         f"of length {params.pos.shape[0]}")
    x = params.proj(steps)
    lead = x.shape[:-2]
    cls = broadcast_to(params.cls, lead + (1, params.dim))
    return TokenSequence(concat([cls, x], axis=-2) + params.pos)


def flatten_frames(frames) -> Tensor:
    """[..., T, C, H, W] -> [..., T, C*H*W], row-major over (C, H, W)."""
    frames = as_tensor(frames)
    *lead, T, C, H, W = frames.shape
    return frames.reshape(*lead, T, C * H * W)


def tokenize_frame_wise(block, params: EncoderParams) -> TokenSequence:
    """One token per whole frame through the shared projection."""
    frames = block.frames if isinstance(block, FaceBlock) else block
    frames = as_tensor(frames)
    if frames.ndim < 4:
        raise ShapeError(f"expected [..., T, C, H, W] frames, got {frames.shape}")
    C, H, W = frames.shape[-3:]
    if C * H * W != params.in_dim:
        raise ShapeError(f"frame resolution {C}x{H}x{W} does not match projection input "
                         f"{params.in_dim}")
    return embed_tokens(flatten_frames(frames), params)


def patch_shuffle(frames: np.ndarray, patch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Reassemble a block from non-repeating patches drawn across all its frames.

    Every (frame, row, col) patch of the block is drawn exactly once, in random
    order, and laid into composite frames of the original size, so the token
    budget matches the frame-wise tokenizer.
    """
    frames = np.asarray(frames, dtype=np.float64)
    T, C, H, W = frames.shape
    if patch_size < 1 or H % patch_size or W % patch_size:
        raise ConfigError(f"frame {H}x{W} is not divisible by patch size {patch_size}")
    ph, pw = H // patch_size, W // patch_size
    # [T, C, ph, p, pw, p] -> [T*ph*pw, C, p, p]
    patches = (frames.reshape(T, C, ph, patch_size, pw, patch_size)
               .transpose(0, 2, 4, 1, 3, 5)
               .reshape(T * ph * pw, C, patch_size, patch_size))
    order = rng.permutation(T * ph * pw)
    chosen = patches[order]
    return (chosen.reshape(T, ph, pw, C, patch_size, patch_size)
            .transpose(0, 3, 1, 4, 2, 5)
            .reshape(T, C, H, W))


def tokenize_patch_wise(block, patch_size: int, params: EncoderParams,
                        rng: np.random.Generator | int = 0) -> TokenSequence:
    """Patch-wise baseline: composite frames of shuffled patches, then frame projection."""
    frames = block.frames if isinstance(block, FaceBlock) else np.asarray(block)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return tokenize_frame_wise(patch_shuffle(frames, patch_size, rng), params)


def encode(seq: TokenSequence, params: EncoderParams, n_layers: int | None = None) -> TokenSequence:
    """x <- MSA(LN(x)) + x for each layer (plus the optional MLP block)."""
    x = seq.tokens
    layers = params.layers if n_layers is None else params.layers[:n_layers]
    for layer in layers:
        x = multi_head_self_attention(layer.ln(x), layer.attn) + x
        if layer.mlp is not None:
            x = layer.mlp(x) + x
    return TokenSequence(x)


def class_token(seq: TokenSequence) -> Tensor:
    return seq.tokens[..., 0, :]
