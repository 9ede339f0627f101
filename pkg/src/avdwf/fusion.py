"""Dynamic weight fusion of the face and audio class tokens.

Two stacked cross-modal attention layers over the pair of class tokens yield
per-head modality weights.  The final layer's weights rescale the original
class tokens, which are then concatenated and scored by a logistic head.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import (
    LayerNormParams,
    LinearLayer,
    Module,
    Tensor,
    as_tensor,
    check_heads,
    concat,
    matmul,
    sigmoid,
    softmax,
    stack,
)

WEIGHT_MODES = ("received", "literal")


class MhcaParams(Module):
    """Modal-sharing projections of one cross-attention layer (used for both modalities)."""

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator):
        check_heads(dim, n_heads)
        self.q = LinearLayer(dim, dim, rng, bias=False)
        self.k = LinearLayer(dim, dim, rng, bias=False)
        self.v = LinearLayer(dim, dim, rng, bias=False)
        self.o = LinearLayer(dim, dim, rng, bias=False)
        self.ln_f = LayerNormParams(dim)
        self.ln_a = LayerNormParams(dim)
        self.n_heads = n_heads
        self.dim = dim


class DwfParams(Module):
    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator, n_layers: int = 2):
        if not 1 <= n_layers <= 2:
            raise ConfigError("dynamic weight fusion supports one or two layers")
        self.layers = [MhcaParams(dim, n_heads, rng) for _ in range(n_layers)]


@dataclass
class FusionWeights:
    """Attention masses and modality weights of one layer.

    ``beta`` maps "ff", "fa", "af", "aa" (query modality first, key second) to
    arrays [..., H].  ``head_wf``/``head_wa`` are per-head weights and
    ``wf``/``wa`` their head means.
    """

    beta: dict[str, Tensor]
    head_wf: Tensor
    head_wa: Tensor
    wf: Tensor
    wa: Tensor

    def as_arrays(self) -> dict[str, np.ndarray]:
        out = {f"beta_{k}": v.data for k, v in self.beta.items()}
        out.update(head_wf=self.head_wf.data, head_wa=self.head_wa.data,
                   wf=self.wf.data, wa=self.wa.data)
        return out


@dataclass
class DwfOutput:
    fused: Tensor  # [..., 2D]
    layers: list[FusionWeights] = field(default_factory=list)
    hidden: list[tuple[Tensor, Tensor]] = field(default_factory=list)

    @property
    def wf(self) -> Tensor:
        return self.layers[-1].wf

    @property
    def wa(self) -> Tensor:
        return self.layers[-1].wa


def _heads(x: Tensor, n_heads: int) -> Tensor:
    """[..., D] -> [..., H, d_h]"""
    d = x.shape[-1]
    return x.reshape(*x.shape[:-1], n_heads, d // n_heads)


def mhca_layer(f, a, params: MhcaParams, weight_mode: str = "received"):
    """One cross-modal attention layer over the class-token pair.

    Returns ``(h_v, h_a, FusionWeights)`` where ``h_v = LN(MHCA(f) + f)`` and
    ``h_a = LN(MHCA(a) + a)``.
    """
    if weight_mode not in WEIGHT_MODES:
        raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")
    f, a = as_tensor(f), as_tensor(a)
    if f.shape != a.shape:
        raise ShapeError(f"class tokens differ in shape: {f.shape} vs {a.shape}")
    n_heads = params.n_heads
    dh = check_heads(f.shape[-1], n_heads)
    scale = 1.0 / math.sqrt(dh)

    qf, kf, vf = (_heads(p(f), n_heads) for p in (params.q, params.k, params.v))
    qa, ka, va = (_heads(p(a), n_heads) for p in (params.q, params.k, params.v))

    # Per head, each query scores the two keys [f, a]; softmax over that pair.
    keys = stack([kf, ka], axis=-2)  # [..., H, 2, d_h]
    queries = stack([qf, qa], axis=-2)  # [..., H, 2, d_h]
    scores = matmul(queries, keys.swapaxes(-1, -2)) * scale  # [..., H, query, key]
    beta = softmax(scores, axis=-1)
    b_ff, b_fa = beta[..., 0, 0], beta[..., 0, 1]
    b_af, b_aa = beta[..., 1, 0], beta[..., 1, 1]

    if weight_mode == "literal":
        head_wf, head_wa = b_ff + b_fa, b_aa + b_af
    else:
        head_wf, head_wa = b_ff + b_af, b_aa + b_fa

    def mhca(weights: Tensor, values: Tensor) -> Tensor:
        scaled = values * weights.reshape(*weights.shape, 1)
        return params.o(scaled.reshape(*scaled.shape[:-2], f.shape[-1]))

    h_v = params.ln_f(mhca(head_wf, vf) + f)
    h_a = params.ln_a(mhca(head_wa, va) + a)
    weights = FusionWeights(
        beta={"ff": b_ff, "fa": b_fa, "af": b_af, "aa": b_aa},
        head_wf=head_wf,
        head_wa=head_wa,
        wf=head_wf.mean(axis=-1),
        wa=head_wa.mean(axis=-1),
    )
    return h_v, h_a, weights


def dwf_forward(f_class, a_class, params: DwfParams, weight_mode: str = "received") -> DwfOutput:
    """Stacked cross-attention layers; final weights rescale the original class tokens."""
    f_class, a_class = as_tensor(f_class), as_tensor(a_class)
    h_v, h_a = f_class, a_class
    out = DwfOutput(fused=None)  # type: ignore[arg-type]
    for layer in params.layers:
        h_v, h_a, w = mhca_layer(h_v, h_a, layer, weight_mode)
        out.layers.append(w)
        out.hidden.append((h_v, h_a))
    wf = out.wf.reshape(*out.wf.shape, 1)
    wa = out.wa.reshape(*out.wa.shape, 1)
    out.fused = concat([f_class * wf, a_class * wa], axis=-1)
    return out


def concat_fusion(f_class, a_class) -> Tensor:
    """Plain concatenation baseline (no modality weighting)."""
    return concat([as_tensor(f_class), as_tensor(a_class)], axis=-1)


class ClassifierHead(Module):
    def __init__(self, in_dim: int, rng: np.random.Generator):
        self.linear = LinearLayer(in_dim, 1, rng)

    def logits(self, v) -> Tensor:
        v = as_tensor(v)
        if v.shape[-1] != self.linear.in_dim:
            raise ShapeError(f"head expects width {self.linear.in_dim}, got {v.shape[-1]}")
        out = self.linear(v)
        return out.reshape(*out.shape[:-1])


def classify(v, head: ClassifierHead) -> Tensor:
    """P(fake) = sigmoid(w . v + b)."""
    return sigmoid(head.logits(v))


def weights_csv(rows) -> str:
    """CSV of (layer, head, W_F, W_A) rows; ``head`` is "mean" for head averages.

    ``rows`` is a list of ``FusionWeights`` (one per layer) for a single sample
    or batch; batched weights are averaged over the batch.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["layer", "head", "W_F", "W_A"])
    for li, w in enumerate(rows, start=1):
        hf = w.head_wf.data.reshape(-1, w.head_wf.shape[-1]).mean(axis=0)
        ha = w.head_wa.data.reshape(-1, w.head_wa.shape[-1]).mean(axis=0)
        for hi in range(hf.size):
            writer.writerow([li, hi, repr(float(hf[hi])), repr(float(ha[hi]))])
        writer.writerow([li, "mean", repr(float(hf.mean())), repr(float(ha.mean()))])
    return buf.getvalue()
