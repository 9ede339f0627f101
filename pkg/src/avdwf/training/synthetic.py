"""Synthetic audio-video pairs with controlled forgery.

A real sample couples the two streams step by step: during video step ``t``
the audio is a tone at one of ``K`` frequencies, and frame ``t`` shows a
grating whose phase is the one assigned to that frequency.  Fakes break the
coupling while keeping each stream's marginal distribution identical to the
real one:

* ``video_only`` -- the video follows an unrelated frequency trajectory
* ``audio_only`` -- the audio follows an unrelated trajectory
* ``desync``     -- the video phase is offset by a constant number of levels

so only a detector that compares the modalities can tell them apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..audio import AudioClip, frame_geometry, samples_for
from ..encoders import FaceBlock
from ..errors import ConfigError

FORGERY_TYPES = ("video_only", "audio_only", "desync")
LABELS = ("real", "fake")


@dataclass(frozen=True)
class SyntheticSpec:
    T: int = 8
    H: int = 16
    W: int = 16
    sample_rate: int = 16000
    frame_length: float = 0.015
    frame_shift: float = 0.004
    frames_per_step: int = 4
    freqs: tuple[float, ...] = (400.0, 800.0, 1600.0, 3200.0)
    wavelength: float = 8.0
    orientation: float = np.pi / 4
    contrast: float = 0.35
    phase_jitter: float = 0.1
    pixel_noise: float = 0.02
    audio_noise: float = 0.005
    amp_range: tuple[float, float] = (0.3, 0.8)
    min_mismatch: int = 4
    max_segments: int = 2

    @property
    def n_levels(self) -> int:
        return len(self.freqs)

    @property
    def level_phases(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_levels) / self.n_levels

    def geometry(self) -> tuple[int, int, int, int]:
        """(frame_len, hop, samples per step, offset of step 0) in samples."""
        L, S = frame_geometry(self.sample_rate, self.frame_length, self.frame_shift)
        return L, S, S * self.frames_per_step, (L - S) // 2

    @property
    def n_samples(self) -> int:
        L, S, _, _ = self.geometry()
        return samples_for(self.T * self.frames_per_step, L, S)


@dataclass
class SyntheticSample:
    face_block: FaceBlock
    audio: AudioClip
    label: str
    forgery_type: str
    sample_id: str = ""
    audio_levels: np.ndarray = field(default=None, repr=False)
    video_levels: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}")
        if (self.label == "real") != (self.forgery_type == "none"):
            raise ValueError("label 'real' requires forgery_type 'none' and vice versa")

    @property
    def y(self) -> int:
        return int(self.label == "fake")


def grating_basis(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """sin/cos carrier of the grating, each [H, W]."""
    yy, xx = np.mgrid[0:spec.H, 0:spec.W].astype(np.float64)
    u = 2.0 * np.pi * (xx * np.cos(spec.orientation) + yy * np.sin(spec.orientation)) / spec.wavelength
    return np.sin(u), np.cos(u)


def render_video(levels: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """[T, 1, H, W] gratings, phase of frame t set by ``levels[t]``."""
    sin_u, cos_u = grating_basis(spec)
    phases = spec.level_phases[levels] + rng.normal(0.0, spec.phase_jitter, size=spec.T)
    # sin(u + phi) = sin u cos phi + cos u sin phi
    frames = 0.5 + spec.contrast * (np.cos(phases)[:, None, None] * sin_u
                                    + np.sin(phases)[:, None, None] * cos_u)
    frames += rng.normal(0.0, spec.pixel_noise, size=frames.shape)
    return np.clip(frames, 0.0, 1.0)[:, None]


def step_of_sample(spec: SyntheticSpec) -> np.ndarray:
    _, _, step_len, offset = spec.geometry()
    n = np.arange(spec.n_samples)
    return np.clip((n - offset) // step_len, 0, spec.T - 1)


def render_audio(levels: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Phase-continuous tone whose frequency follows ``levels`` step by step."""
    inst_freq = np.asarray(spec.freqs)[levels][step_of_sample(spec)]
    phase = rng.uniform(0, 2 * np.pi) + 2.0 * np.pi * np.cumsum(inst_freq) / spec.sample_rate
    amp = rng.uniform(*spec.amp_range)
    x = amp * np.sin(phase) + rng.normal(0.0, spec.audio_noise, size=phase.size)
    return np.clip(x, -1.0, 1.0)


def _f32(x: np.ndarray) -> np.ndarray:
    # keep values exactly representable in the float32 on-disk formats
    return x.astype(np.float32).astype(np.float64)


def _mismatches(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.sum(a != b))


def draw_levels(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant trajectory with up to ``max_segments`` segments."""
    n_seg = int(rng.integers(1, spec.max_segments + 1))
    cuts = np.sort(rng.choice(np.arange(1, spec.T), size=n_seg - 1, replace=False))
    seg_levels = rng.integers(0, spec.n_levels, size=n_seg)
    return np.repeat(seg_levels, np.diff(np.concatenate([[0], cuts, [spec.T]])))


def _forge_levels(kind: str, levels: np.ndarray, spec: SyntheticSpec,
                  rng: np.random.Generator) -> np.ndarray:
    if kind == "desync":
        # constant phase offset of the whole video relative to the audio
        return (levels + int(rng.integers(1, spec.n_levels))) % spec.n_levels
    for _ in range(1000):
        other = draw_levels(spec, rng)
        if _mismatches(other, levels) >= min(spec.min_mismatch, spec.T):
            return other
    raise RuntimeError("could not draw a sufficiently different trajectory")


def make_sample(kind: str, spec: SyntheticSpec, rng: np.random.Generator,
                sample_id: str = "") -> SyntheticSample:
    levels = draw_levels(spec, rng)
    audio_levels = video_levels = levels
    if kind == "video_only":
        video_levels = _forge_levels(kind, levels, spec, rng)
    elif kind == "audio_only":
        audio_levels = _forge_levels(kind, levels, spec, rng)
    elif kind == "desync":
        video_levels = _forge_levels(kind, levels, spec, rng)
    elif kind != "none":
        raise ConfigError(f"unknown forgery type {kind!r}")
    frames = _f32(render_video(video_levels, spec, rng))
    audio = _f32(render_audio(audio_levels, spec, rng))
    return SyntheticSample(
        face_block=FaceBlock(frames),
        audio=AudioClip(audio, spec.sample_rate),
        label="real" if kind == "none" else "fake",
        forgery_type=kind,
        sample_id=sample_id,
        audio_levels=audio_levels,
        video_levels=video_levels,
    )


def _validate_mix(mix: dict) -> dict[str, float]:
    if not mix:
        raise ConfigError("forgery mix is empty")
    unknown = set(mix) - set(FORGERY_TYPES)
    if unknown:
        raise ConfigError(f"unknown forgery types {sorted(unknown)}")
    if any(v < 0 for v in mix.values()):
        raise ConfigError("forgery proportions must be non-negative")
    if abs(sum(mix.values()) - 1.0) > 1e-9:
        raise ConfigError(f"forgery proportions sum to {sum(mix.values())}, not 1")
    return {k: float(mix[k]) for k in FORGERY_TYPES if k in mix}


def allocate(n: int, proportions: dict[str, float]) -> dict[str, int]:
    """Integer counts summing to ``n`` (largest-remainder rounding, stable order)."""
    raw = {k: n * p for k, p in proportions.items()}
    counts = {k: int(np.floor(v)) for k, v in raw.items()}
    rest = n - sum(counts.values())
    order = sorted(raw, key=lambda k: (-(raw[k] - counts[k]), list(raw).index(k)))
    for k in order[:rest]:
        counts[k] += 1
    return counts


DEFAULT_MIX = {"video_only": 1 / 3, "audio_only": 1 / 3, "desync": 1 / 3}


def generate_dataset(n: int, seed: int, forgery_mix: dict | None = None,
                     spec: SyntheticSpec = SyntheticSpec()) -> list[SyntheticSample]:
    """``n // 2`` real samples plus ``n - n // 2`` fakes split per ``forgery_mix``."""
    if n < 2:
        raise ConfigError("need at least two samples (one real, one fake)")
    mix = _validate_mix(DEFAULT_MIX if forgery_mix is None else forgery_mix)
    n_real = n // 2
    kinds = ["none"] * n_real
    for kind, count in allocate(n - n_real, mix).items():
        kinds += [kind] * count
    order_rng, *sample_seeds = np.random.SeedSequence(seed).spawn(n + 1)
    kinds = [kinds[i] for i in np.random.default_rng(order_rng).permutation(n)]
    return [make_sample(kind, spec, np.random.default_rng(ss), sample_id=f"syn{seed}-{i:05d}")
            for i, (kind, ss) in enumerate(zip(kinds, sample_seeds))]


# -- coupling statistic measured from the raw signals --------------------------
def video_phases(frames: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    """Grating phase of each frame by projection onto the sin/cos carriers."""
    sin_u, cos_u = grating_basis(spec)
    x = np.asarray(frames, dtype=np.float64).reshape(frames.shape[0], spec.H, spec.W) - 0.5
    return np.arctan2((x * cos_u).sum(axis=(1, 2)), (x * sin_u).sum(axis=(1, 2)))


def audio_phases(samples: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    """Dominant tone of each step's audio, mapped to that frequency's grating phase."""
    _, _, step_len, offset = spec.geometry()
    out = np.empty(spec.T)
    freqs = np.asarray(spec.freqs)
    for t in range(spec.T):
        seg = samples[offset + t * step_len: offset + (t + 1) * step_len]
        spectrum = np.abs(np.fft.rfft(seg * np.hanning(seg.size), n=4096))
        peak = np.argmax(spectrum) * spec.sample_rate / 4096
        out[t] = spec.level_phases[int(np.argmin(np.abs(np.log(freqs / max(peak, 1.0)))))]
    return out


def coupling_statistic(sample: SyntheticSample, spec: SyntheticSpec = SyntheticSpec()) -> float:
    """Mean cosine between audio-implied and observed video phase (1 = perfectly coupled)."""
    pv = video_phases(sample.face_block.frames[:, 0], spec)
    pa = audio_phases(sample.audio.samples, spec)
    return float(np.mean(np.cos(pa - pv)))
