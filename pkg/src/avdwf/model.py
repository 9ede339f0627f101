"""The audio-visual detector: two encoders, a fusion stage and a logistic head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import MfccConfig, align_audio_block, aligned_width, mfcc_tensor
from .encoders import EncoderParams, class_token, embed_tokens, encode, tokenize_frame_wise
from .errors import ConfigError
from .fusion import WEIGHT_MODES, ClassifierHead, DwfOutput, DwfParams, concat_fusion, dwf_forward
from .numerics import Module, Tensor, as_tensor, check_heads, sigmoid, stack

FUSION_MODES = ("visual_only", "av_concat", "av_dwf")
TOKENIZER_MODES = ("frame", "patch")


@dataclass
class ModelConfig:
    T: int = 8
    C: int = 1
    H: int = 16
    W: int = 16
    D: int = 32
    L: int = 2
    n_heads: int = 4
    mlp_hidden: int = 0
    sample_rate: int = 16000
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    frames_per_step: int = 4
    align_mode: str = "mean"
    fusion_mode: str = "av_dwf"
    weight_mode: str = "received"
    dwf_layers: int = 2
    tokenizer_mode: str = "frame"
    patch_size: int = 8

    def validate(self) -> "ModelConfig":
        if min(self.T, self.C, self.H, self.W, self.D) < 1:
            raise ConfigError("T, C, H, W and D must be positive")
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        check_heads(self.D, self.n_heads)
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.tokenizer_mode not in TOKENIZER_MODES:
            raise ConfigError(f"tokenizer_mode must be one of {TOKENIZER_MODES}")
        if self.tokenizer_mode == "patch" and (self.H % self.patch_size or self.W % self.patch_size):
            raise ConfigError("frame size must be divisible by patch_size")
        if self.align_mode not in ("mean", "stack"):
            raise ConfigError("align_mode must be 'mean' or 'stack'")
        self.mfcc.validate(self.sample_rate)
        return self

    @property
    def frame_dim(self) -> int:
        return self.C * self.H * self.W

    @property
    def audio_dim(self) -> int:
        return aligned_width(self.mfcc.n_mfcc, self.frames_per_step, self.align_mode)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if isinstance(d.get("mfcc"), dict):
            d["mfcc"] = MfccConfig(**d["mfcc"])
        return cls(**d)


@dataclass
class Prediction:
    prob: Tensor
    logits: Tensor
    f_class: Tensor
    a_class: Tensor | None
    fusion: DwfOutput | None


class AVDetector(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        rng = np.random.default_rng(seed)
        self.face = EncoderParams(config.frame_dim, config.T, config.D, config.L, config.n_heads,
                                  rng, config.mlp_hidden)
        visual_only = config.fusion_mode == "visual_only"
        self.audio = None if visual_only else EncoderParams(
            config.audio_dim, config.T, config.D, config.L, config.n_heads, rng, config.mlp_hidden)
        self.dwf = (DwfParams(config.D, config.n_heads, rng, config.dwf_layers)
                    if config.fusion_mode == "av_dwf" else None)
        self.head = ClassifierHead(config.D if visual_only else 2 * config.D, rng)
        self.config = config

    def audio_tokens(self, waveform) -> Tensor:
        """Raw waveform [N] (or [..., N]) -> aligned audio step features [..., T, M_eff]."""
        cfg = self.config
        w = as_tensor(waveform)
        if w.ndim == 1:
            feats = mfcc_tensor(w, cfg.sample_rate, cfg.mfcc)
            return align_audio_block(feats, cfg.T, cfg.frames_per_step, cfg.align_mode)
        return stack([self.audio_tokens(w[i]) for i in range(w.shape[0])], axis=0)

    def forward(self, frames, audio_steps=None) -> Prediction:
        """frames [..., T, C, H, W]; audio_steps [..., T, M_eff] (ignored for visual_only)."""
        cfg = self.config
        f_class = class_token(encode(tokenize_frame_wise(frames, self.face), self.face))
        a_class = fusion = None
        if cfg.fusion_mode == "visual_only":
            v = f_class
        else:
            if audio_steps is None:
                raise ConfigError(f"{cfg.fusion_mode} needs audio input")
            a_class = class_token(encode(embed_tokens(audio_steps, self.audio), self.audio))
            if cfg.fusion_mode == "av_concat":
                v = concat_fusion(f_class, a_class)
            else:
                fusion = dwf_forward(f_class, a_class, self.dwf, cfg.weight_mode)
                v = fusion.fused
        logits = self.head.logits(v)
        return Prediction(sigmoid(logits), logits, f_class, a_class, fusion)

    def forward_raw(self, frames, waveform) -> Prediction:
        """End-to-end from pixels and waveform samples."""
        audio = None if self.config.fusion_mode == "visual_only" else self.audio_tokens(waveform)
        return self.forward(frames, audio)

    def predict_proba(self, frames, audio_steps=None) -> np.ndarray:
        return self.forward(Tensor(frames), None if audio_steps is None else Tensor(audio_steps)).prob.data
