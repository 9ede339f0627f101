"""Run configuration: named presets shipped with the package plus JSON overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import ConfigError
from ..model import ModelConfig
from ..training.trainer import TrainConfig

PRESETS = ("desk", "paper")


@dataclass
class DataConfig:
    n_samples: int = 1000
    split_ratio: tuple[int, int, int] = (7, 1, 2)
    data_dir: str | None = None
    manifest: str | None = None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        for name in ("fusion_mode", "tokenizer_mode", "weight_mode"):
            if getattr(self.model, name) != getattr(self.train, name):
                raise ConfigError(f"{name} differs between model ({getattr(self.model, name)}) "
                                  f"and train ({getattr(self.train, name)}) sections")
        if self.data.n_samples < 2:
            raise ConfigError("data.n_samples must be at least 2")
        if len(self.data.split_ratio) != 3 or min(self.data.split_ratio) < 0:
            raise ConfigError("data.split_ratio must be three non-negative numbers")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        unknown = set(d) - {"model", "train", "data", "seed", "out_dir"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            model = ModelConfig.from_dict(d.get("model", {}))
            train = TrainConfig(**d.get("train", {}))
            data = DataConfig(**d.get("data", {}))
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc
        data.split_ratio = tuple(data.split_ratio)
        return cls(model, train, data, int(d.get("seed", 0)), str(d.get("out_dir", "out")))


def builtin_presets() -> dict:
    text = resources.files("avdwf.dataio").joinpath("presets.json").read_text(encoding="utf-8")
    return json.loads(text)["presets"]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_run_config(path=None, preset: str = "desk", overrides: dict | None = None) -> RunConfig:
    """Preset, then the optional JSON file, then ``overrides``; mode fields are mirrored.

    The file may itself carry a ``presets`` table (same layout as the built-in
    one), in which case the chosen preset is taken from it.
    """
    presets = builtin_presets()
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if "presets" in doc:
            presets = _merge(presets, doc.pop("presets"))
    if preset not in presets:
        raise ConfigError(f"unknown preset {preset!r}; available: {sorted(presets)}")
    merged = _merge(_merge(presets[preset], doc), overrides or {})
    # mode switches live on both sections; a value given on either wins
    for name in ("fusion_mode", "tokenizer_mode", "weight_mode"):
        value = merged.get("train", {}).get(name, merged.get("model", {}).get(name))
        if value is not None:
            merged.setdefault("model", {})[name] = value
            merged.setdefault("train", {})[name] = value
    cfg = RunConfig.from_dict(merged)
    cfg.train.seed = cfg.seed
    return cfg.validate()
