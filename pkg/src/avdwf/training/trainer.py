"""Feature preparation, Adam/BCE training loop and evaluation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..audio import align_audio_block, mfcc_tensor
from ..encoders import patch_shuffle
from ..errors import ConfigError, NonFiniteError, TrainingDivergedError
from ..model import FUSION_MODES, TOKENIZER_MODES, AVDetector, ModelConfig
from ..fusion import WEIGHT_MODES
from ..numerics import Tensor, bce_with_logits, no_grad
from .metrics import accuracy, binary_metrics, confusion

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0
    weight_mode: str = "received"
    tokenizer_mode: str = "frame"
    fusion_mode: str = "av_dwf"

    def validate(self) -> "TrainConfig":
        if not self.lr >= 0:
            raise ConfigError("lr must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.tokenizer_mode not in TOKENIZER_MODES:
            raise ConfigError(f"tokenizer_mode must be one of {TOKENIZER_MODES}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}")
        return self


@dataclass
class FeatureSet:
    """Model-ready arrays for a set of samples."""

    frames: np.ndarray  # [n, T, C, H, W]
    audio: np.ndarray  # [n, T, M_eff]
    labels: np.ndarray  # [n] with 1 = fake
    forgery: list[str] = field(default_factory=list)
    ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.labels.size)

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=int)
        return FeatureSet(self.frames[idx], self.audio[idx], self.labels[idx],
                          [self.forgery[i] for i in idx] if self.forgery else [],
                          [self.ids[i] for i in idx] if self.ids else [])


def sample_audio_features(samples: np.ndarray, sample_rate: int, cfg: ModelConfig) -> np.ndarray:
    feats = mfcc_tensor(Tensor(samples), sample_rate, cfg.mfcc)
    return align_audio_block(feats, cfg.T, cfg.frames_per_step, cfg.align_mode).data


def prepare_features(samples, cfg: ModelConfig, seed: int = 0) -> FeatureSet:
    """Stack frames, compute aligned MFCC tokens; patch-shuffle frames in patch mode.

    Each sample's patch layout is drawn from its own generator seeded by
    ``(seed, index)``, so the result is reproducible and order-independent.
    """
    frames, audio, labels, forgery, ids = [], [], [], [], []
    with no_grad():
        for i, s in enumerate(samples):
            fr = s.face_block.frames
            if cfg.tokenizer_mode == "patch":
                fr = patch_shuffle(fr, cfg.patch_size, np.random.default_rng([seed, i]))
            if s.audio.sample_rate != cfg.sample_rate:
                raise ConfigError(f"sample {s.sample_id}: {s.audio.sample_rate} Hz audio, "
                                  f"model expects {cfg.sample_rate} Hz")
            frames.append(fr)
            audio.append(sample_audio_features(s.audio.samples, cfg.sample_rate, cfg))
            labels.append(s.y)
            forgery.append(s.forgery_type)
            ids.append(s.sample_id)
    return FeatureSet(np.stack(frames), np.stack(audio), np.asarray(labels, dtype=np.int64),
                      forgery, ids)


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def batch_loss(model: AVDetector, data: FeatureSet, idx) -> tuple[Tensor, np.ndarray]:
    pred = model.forward(Tensor(data.frames[idx]), Tensor(data.audio[idx]))
    return bce_with_logits(pred.logits, data.labels[idx]), pred.prob.data


@dataclass
class TrainResult:
    history: list[dict]
    final_loss: float
    steps: int

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["epoch", "split", "loss", "acc"],
                                lineterminator="\n")
        writer.writeheader()
        for row in self.history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def train(model: AVDetector, data: FeatureSet, cfg: TrainConfig,
          val: FeatureSet | None = None) -> TrainResult:
    """Mini-batch Adam on mean BCE; parameters of ``model`` are updated in place."""
    cfg.validate()
    if len(data) == 0:
        raise ValueError("training split is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    history: list[dict] = []
    final_loss = float("nan")
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        total, correct = 0.0, 0
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            try:
                loss, prob = batch_loss(model, data, idx)
            except NonFiniteError as exc:
                raise TrainingDivergedError(f"epoch {epoch}: non-finite forward pass ({exc})") from exc
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError(f"epoch {epoch}: loss is {value}")
            loss.backward()
            opt.step()
            total += value * idx.size
            correct += int(np.sum((prob >= 0.5) == (data.labels[idx] == 1)))
        final_loss = total / len(data)
        history.append({"epoch": epoch, "split": "train", "loss": final_loss,
                        "acc": correct / len(data)})
        if val is not None and len(val):
            history.append({"epoch": epoch, "split": "val", "loss": dataset_loss(model, val),
                            "acc": evaluate(model, val, require_auc=False)["acc"]})
        log.debug("epoch %d loss %.5f", epoch, final_loss)
    return TrainResult(history, final_loss, opt.t)


def predict(model: AVDetector, data: FeatureSet, chunk: int = 128) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(data), chunk):
            sl = slice(start, start + chunk)
            out.append(model.forward(Tensor(data.frames[sl]), Tensor(data.audio[sl])).prob.data)
    return np.concatenate(out) if out else np.zeros(0)


def dataset_loss(model: AVDetector, data: FeatureSet) -> float:
    with no_grad():
        loss, _ = batch_loss(model, data, np.arange(len(data)))
    return float(loss.data)


def evaluate(model: AVDetector, data: FeatureSet, require_auc: bool = True) -> dict:
    """ACC at 0.5, Mann-Whitney AUC and the confusion counts."""
    if len(data) == 0:
        raise ValueError("evaluation set is empty")
    scores = predict(model, data)
    if not require_auc and len(set(data.labels.tolist())) < 2:
        return {"acc": accuracy(scores, data.labels), "confusion": confusion(scores, data.labels),
                "n": len(data)}
    return binary_metrics(scores, data.labels)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
