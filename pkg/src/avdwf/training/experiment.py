"""Seeded experiment runs on the synthetic task and the fusion/tokenizer ablation matrix."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import AUCUndefinedError, ConfigError
from ..model import FUSION_MODES, TOKENIZER_MODES, AVDetector, ModelConfig
from .synthetic import SyntheticSpec, generate_dataset
from .trainer import FeatureSet, TrainConfig, TrainResult, evaluate, prepare_features, train

SPLITS = ("train", "val", "test")


def split_counts(n: int, ratio=(7, 1, 2)) -> tuple[int, int, int]:
    """Largest-remainder allocation of ``n`` items to (train, val, test)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    if ratio.shape != (3,) or np.any(ratio < 0) or ratio.sum() <= 0:
        raise ConfigError(f"split ratio must be three non-negative numbers, got {ratio.tolist()}")
    exact = n * ratio / ratio.sum()
    counts = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    return tuple(int(c) for c in counts)


def stratified_split(labels, ratio=(7, 1, 2), seed: int = 0) -> dict[str, np.ndarray]:
    """Shuffle each class separately and cut it at the same ratio."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts: dict[str, list[np.ndarray]] = {s: [] for s in SPLITS}
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        a, b, _ = split_counts(idx.size, ratio)
        for name, chunk in zip(SPLITS, (idx[:a], idx[a:a + b], idx[a + b:])):
            parts[name].append(chunk)
    return {s: np.sort(np.concatenate(parts[s])) for s in SPLITS}


@dataclass
class ExperimentSpec:
    """Protocol knobs shared by every run of an ablation."""

    n_samples: int = 1000
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 8
    weight_mode: str = "received"
    split_ratio: tuple[int, int, int] = (7, 1, 2)
    model: ModelConfig = field(default_factory=ModelConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass
class RunResult:
    fusion_mode: str
    tokenizer_mode: str
    seed: int
    metrics: dict
    audio_forged: dict
    result: TrainResult
    model: AVDetector
    seconds: float

    def row(self) -> dict:
        return {"fusion_mode": self.fusion_mode, "tokenizer_mode": self.tokenizer_mode,
                "seed": self.seed, "acc": self.metrics["acc"], "auc": self.metrics["auc"],
                "audio_forged_auc": self.audio_forged["auc"]}


class DataCache:
    """Feature sets keyed by (seed, tokenizer) so ablation runs share generation work."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self._samples: dict[int, list] = {}
        self._features: dict[tuple[int, str], dict[str, FeatureSet]] = {}

    def samples(self, seed: int):
        if seed not in self._samples:
            self._samples[seed] = generate_dataset(self.spec.n_samples, seed,
                                                   spec=self.spec.synthetic)
        return self._samples[seed]

    def splits(self, seed: int, tokenizer_mode: str) -> dict[str, FeatureSet]:
        key = (seed, tokenizer_mode)
        if key not in self._features:
            cfg = replace(self.spec.model, tokenizer_mode=tokenizer_mode)
            features = prepare_features(self.samples(seed), cfg, seed)
            parts = stratified_split(features.labels, self.spec.split_ratio, seed)
            self._features[key] = {s: features.subset(parts[s]) for s in SPLITS}
        return self._features[key]


def audio_forged_subset(data: FeatureSet) -> FeatureSet:
    """Real samples plus the fakes whose audio alone was manipulated."""
    return data.subset([i for i, f in enumerate(data.forgery) if f in ("none", "audio_only")])


def run_config(fusion_mode: str, tokenizer_mode: str, seed: int,
               spec: ExperimentSpec | None = None, cache: DataCache | None = None) -> RunResult:
    spec = spec or ExperimentSpec()
    cache = cache or DataCache(spec)
    data = cache.splits(seed, tokenizer_mode)
    model_cfg = replace(spec.model, fusion_mode=fusion_mode, tokenizer_mode=tokenizer_mode,
                        weight_mode=spec.weight_mode)
    model = AVDetector(model_cfg, seed=seed)
    tcfg = TrainConfig(lr=spec.lr, epochs=spec.epochs, batch_size=spec.batch_size, seed=seed,
                       weight_mode=spec.weight_mode, tokenizer_mode=tokenizer_mode,
                       fusion_mode=fusion_mode)
    start = time.perf_counter()
    result = train(model, data["train"], tcfg)
    seconds = time.perf_counter() - start
    try:
        audio_forged = evaluate(model, audio_forged_subset(data["test"]))
    except AUCUndefinedError as exc:  # tiny test splits may lack audio-only fakes
        audio_forged = dict(exc.metrics, auc=float("nan"))
    return RunResult(fusion_mode, tokenizer_mode, seed, evaluate(model, data["test"]),
                     audio_forged, result, model, seconds)


def run_ablation(seeds=(1, 2, 3), fusion_modes=FUSION_MODES, tokenizer_modes=TOKENIZER_MODES,
                 spec: ExperimentSpec | None = None, progress=None) -> list[RunResult]:
    spec = spec or ExperimentSpec()
    cache = DataCache(spec)
    runs = []
    for seed in seeds:
        for tok in tokenizer_modes:
            for fm in fusion_modes:
                run = run_config(fm, tok, seed, spec, cache)
                if progress is not None:
                    progress(run)
                runs.append(run)
    return runs


def median_by(runs, key: str = "auc") -> dict[tuple[str, str], float]:
    groups: dict[tuple[str, str], list[float]] = {}
    for r in runs:
        groups.setdefault((r.fusion_mode, r.tokenizer_mode), []).append(r.row()[key])
    return {k: float(np.median(v)) for k, v in groups.items()}


def ablation_csv(runs) -> str:
    buf = io.StringIO()
    fields = ["fusion_mode", "tokenizer_mode", "seed", "acc", "auc", "audio_forged_auc"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in runs:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue()
