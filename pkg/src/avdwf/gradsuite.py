"""Finite-difference checks over every differentiable op and the assembled detector.

Each check draws fresh inputs at several random points and compares
reverse-mode gradients with central differences at a random subset of
coordinates.  The worst relative error across points is reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics as nx
from .audio import mfcc_tensor
from .encoders import EncoderParams, class_token, encode, tokenize_frame_wise
from .fusion import ClassifierHead, DwfParams, classify, dwf_forward, mhca_layer
from .model import AVDetector, ModelConfig
from .numerics import GradCheckResult, gradcheck
from .training.synthetic import SyntheticSpec, generate_dataset


@dataclass
class Check:
    name: str
    fn: Callable
    draw: Callable[[np.random.Generator], list]
    max_coords: int = 12
    h: float = 1e-5
    # The log-mel path has large higher derivatives at quiet bands while its
    # outputs are large, so neither a small nor a large two-point step is
    # accurate there; audio checks use the fourth-order stencil instead.
    order: int = 2


def _normal(*shape):
    return lambda rng: [rng.normal(size=s) for s in shape]


def _away_from_zero(shape):
    # keep kinked ops (relu) away from their kink so central differences are valid
    def draw(rng):
        x = rng.uniform(0.1, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
        return [x]
    return draw


def op_checks() -> list[Check]:
    return [
        Check("add", nx.add, _normal((3, 4), (4,))),
        Check("sub", nx.sub, _normal((3, 4), (3, 1))),
        Check("mul", nx.mul, _normal((3, 4), (3, 4))),
        Check("div", nx.div, lambda r: [r.normal(size=(3, 4)), r.uniform(0.5, 2.0, (3, 4))]),
        Check("neg", nx.neg, _normal((5,))),
        Check("matmul", nx.matmul, _normal((2, 3, 4), (4, 5))),
        Check("exp", nx.exp, _normal((3, 4))),
        Check("log", nx.log, lambda r: [r.uniform(0.2, 3.0, (3, 4))]),
        Check("sqrt", nx.sqrt, lambda r: [r.uniform(0.2, 3.0, (3, 4))]),
        Check("square", nx.square, _normal((3, 4))),
        Check("tanh", nx.tanh, _normal((3, 4))),
        Check("sigmoid", nx.sigmoid, _normal((3, 4))),
        Check("relu", nx.relu, _away_from_zero((3, 4))),
        Check("gelu", nx.gelu, _normal((3, 4))),
        Check("clip_min", lambda x: nx.clip_min(x, 0.5),
              lambda r: [r.uniform(0.6, 2.0, (4,)) * r.choice([1, 0.1], size=4)]),
        Check("sum", lambda x: nx.tsum(x, axis=1), _normal((3, 4))),
        Check("mean", lambda x: nx.mean(x, axis=0), _normal((3, 4))),
        Check("reshape", lambda x: nx.reshape(x, (4, 3)), _normal((3, 4))),
        Check("transpose", lambda x: nx.transpose(x, (1, 0, 2)), _normal((2, 3, 4))),
        Check("swapaxes", lambda x: nx.swapaxes(x, 0, 2), _normal((2, 3, 4))),
        Check("getitem", lambda x: nx.getitem(x, (slice(None), [0, 2, 2])), _normal((3, 4))),
        Check("concat", lambda a, b: nx.concat([a, b], axis=0), _normal((2, 3), (1, 3))),
        Check("stack", lambda a, b: nx.stack([a, b], axis=1), _normal((2, 3), (2, 3))),
        Check("broadcast_to", lambda x: nx.broadcast_to(x, (4, 3)), _normal((1, 3))),
        Check("softmax", lambda x: nx.softmax(x, axis=-1), _normal((3, 5))),
        Check("layer_norm", nx.layer_norm, _normal((4, 6), (6,), (6,))),
        Check("bce_with_logits", lambda z: nx.bce_with_logits(z, np.array([0, 1, 1, 0])),
              _normal((4,))),
    ]


def module_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    attn = nx.AttentionParams(8, 2, rng)
    enc = EncoderParams(16, 2, 8, 2, 2, rng)
    dwf = DwfParams(8, 2, rng)
    head = ClassifierHead(16, rng)
    return [
        Check("multi_head_self_attention", lambda x: nx.multi_head_self_attention(x, attn),
              _normal((3, 8))),
        Check("class_token <- pixels",
              lambda px: class_token(encode(tokenize_frame_wise(px, enc), enc)),
              lambda r: [r.uniform(0, 1, (2, 1, 4, 4))]),
        Check("mhca_layer", lambda f, a: mhca_layer(f, a, dwf.layers[0])[0], _normal((8,), (8,))),
        Check("dwf_forward", lambda f, a: dwf_forward(f, a, dwf).fused, _normal((8,), (8,))),
        Check("classify", lambda v: classify(v, head), _normal((16,))),
        Check("mfcc", lambda s: mfcc_tensor(s, 16000),
              lambda r: [r.uniform(-0.5, 0.5, 240 + 64)], max_coords=8, h=1e-4, order=4),
    ]


def end_to_end_check(seed: int = 0) -> Check:
    """Pixels and raw waveform through MFCC, both encoders, DWF and the head."""
    cfg = ModelConfig()
    model = AVDetector(cfg, seed=seed)
    spec = SyntheticSpec()

    def draw(rng):
        s = generate_dataset(2, int(rng.integers(1 << 31)), spec=spec)[int(rng.integers(2))]
        return [s.face_block.frames, s.audio.samples]

    return Check("end-to-end P(fake) <- pixels, waveform",
                 lambda fr, wav: model.forward_raw(fr, wav).prob, draw, max_coords=6, h=1e-4, order=4)


def run_gradient_suite(seed: int = 0, points: int = 10, tol: float = 1e-5,
                       checks: list[Check] | None = None) -> list[GradCheckResult]:
    checks = checks if checks is not None else (
        op_checks() + module_checks(seed) + [end_to_end_check(seed)])
    rng = np.random.default_rng(seed)
    results = []
    for check in checks:
        worst = None
        total = 0
        for _ in range(points):
            res = gradcheck(check.fn, check.draw(rng), h=check.h, order=check.order, tol=tol,
                            max_coords=check.max_coords, rng=rng, name=check.name)
            total += res.n_checked
            if worst is None or res.max_rel_error > worst.max_rel_error:
                worst = res
        results.append(GradCheckResult(check.name, worst.max_rel_error, worst.max_abs_error,
                                       total, tol))
    return results
