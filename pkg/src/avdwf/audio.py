"""MFCC front-end: framing, direct DFT power spectrum, mel filterbank, log, DCT-II.

The pipeline is written with differentiable ``Tensor`` ops so the full
detector can be gradient-checked from raw waveform samples; the plain
``mfcc`` entry point simply runs it without gradient tracking.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigError, EmptyInputError
from .numerics import Tensor, as_tensor, clip_min, getitem, log, matmul, square

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise EmptyInputError("audio clip has no samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MfccConfig:
    n_mfcc: int = 13
    n_mels: int = 26
    n_fft: int = 512
    fmin: float = 0.0
    fmax: float = 8000.0
    frame_length: float = 0.015
    frame_shift: float = 0.004
    log_floor: float = 1e-10

    def validate(self, sample_rate: int) -> None:
        L, S = frame_geometry(sample_rate, self.frame_length, self.frame_shift)
        if self.n_fft < L:
            raise ConfigError(f"n_fft={self.n_fft} is shorter than the {L}-sample frame")
        if not (0 <= self.fmin < self.fmax <= sample_rate / 2):
            raise ConfigError(f"invalid band edges fmin={self.fmin}, fmax={self.fmax} "
                              f"at {sample_rate} Hz")
        if not (1 <= self.n_mfcc <= self.n_mels):
            raise ConfigError("need 1 <= n_mfcc <= n_mels")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")


@dataclass
class MfccMatrix:
    values: np.ndarray  # [T_a, M]
    frame_shift: float
    frame_length: float

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def frame_geometry(sample_rate: int, frame_len_s: float, shift_s: float) -> tuple[int, int]:
    if not (frame_len_s >= shift_s > 0):
        raise ConfigError("need frame_len_s >= shift_s > 0")
    return int(round(frame_len_s * sample_rate)), int(round(shift_s * sample_rate))


def n_frames_for(n_samples: int, frame_len: int, shift: int) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // shift + 1


def samples_for(n_frames: int, frame_len: int, shift: int) -> int:
    """Smallest signal length yielding ``n_frames`` frames."""
    return frame_len + (n_frames - 1) * shift


@lru_cache(maxsize=32)
def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window: w[n] = 0.5 - 0.5 cos(2 pi n / length)."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


@lru_cache(maxsize=32)
def _frame_index(n_frames: int, frame_len: int, shift: int) -> np.ndarray:
    return np.arange(frame_len)[None, :] + shift * np.arange(n_frames)[:, None]


def _frames(samples: Tensor, frame_len: int, shift: int) -> Tensor:
    n = n_frames_for(samples.shape[-1], frame_len, shift)
    if n == 0:
        raise EmptyInputError(f"clip of {samples.shape[-1]} samples is shorter than one "
                              f"{frame_len}-sample frame")
    return getitem(samples, (Ellipsis, _frame_index(n, frame_len, shift))) * hann_window(frame_len)


def frame_signal(clip: AudioClip, frame_len_s: float, shift_s: float) -> np.ndarray:
    """Hann-windowed frames, shape [n_frames, frame_len]."""
    L, S = frame_geometry(clip.sample_rate, frame_len_s, shift_s)
    return _frames(Tensor(clip.samples), L, S).data


@lru_cache(maxsize=32)
def dft_matrices(frame_len: int, n_fft: int) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of the one-sided DFT of a zero-padded frame.

    Shapes [frame_len, n_fft // 2 + 1]; only the first ``frame_len`` input rows
    are non-zero after padding, so the rest of the matrix is dropped.
    """
    n = np.arange(frame_len)[:, None]
    k = np.arange(n_fft // 2 + 1)[None, :]
    # reduce n*k mod n_fft first so the angle stays small and exact
    ang = 2.0 * np.pi * ((n * k) % n_fft) / n_fft
    return np.cos(ang), -np.sin(ang)


def power_spectrum(frames, n_fft: int) -> Tensor:
    """|X_k|^2 for k = 0..n_fft/2 of each frame (rows), via a direct DFT."""
    frames = as_tensor(frames)
    re_m, im_m = dft_matrices(frames.shape[-1], n_fft)
    return square(matmul(frames, re_m)) + square(matmul(frames, im_m))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-mel filters evaluated at DFT bin centres, shape [n_bins, n_mels]."""
    if not (0 <= fmin < fmax <= sample_rate / 2):
        raise ConfigError(f"invalid band edges fmin={fmin}, fmax={fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    return bank.T.copy()


@lru_cache(maxsize=32)
def dct_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II as a [n_in, n_out] matrix (first ``n_out`` coefficients)."""
    n = np.arange(n_in)[:, None]
    k = np.arange(n_out)[None, :]
    mat = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    mat[:, 0] = np.sqrt(1.0 / n_in)
    return mat


def mfcc_tensor(samples, sample_rate: int, config: MfccConfig = MfccConfig()) -> Tensor:
    """Differentiable MFCC of a 1-d waveform tensor, shape [n_frames, n_mfcc]."""
    config.validate(sample_rate)
    samples = as_tensor(samples)
    L, S = frame_geometry(sample_rate, config.frame_length, config.frame_shift)
    power = power_spectrum(_frames(samples, L, S), config.n_fft)
    fb = mel_filterbank(config.n_mels, config.n_fft, sample_rate, config.fmin, config.fmax)
    energies = clip_min(matmul(power, fb), config.log_floor)
    return matmul(log(energies), dct_matrix(config.n_mels, config.n_mfcc))


def mfcc(clip: AudioClip, config: MfccConfig = MfccConfig()) -> MfccMatrix:
    values = mfcc_tensor(Tensor(clip.samples), clip.sample_rate, config).data
    return MfccMatrix(values, config.frame_shift, config.frame_length)


def align_audio_block(features, video_T: int, frames_per_step: int, mode: str = "mean") -> Tensor:
    """Group MFCC rows so there is exactly one audio token per video frame.

    ``mode="mean"`` averages each group of ``frames_per_step`` rows;
    ``mode="stack"`` concatenates them into rows of width ``frames_per_step * M``.
    Surplus trailing MFCC rows are ignored.
    """
    if isinstance(features, MfccMatrix):
        features = features.values
    x = as_tensor(features)
    if video_T < 1 or frames_per_step < 1:
        raise ConfigError("video_T and frames_per_step must be >= 1")
    need = video_T * frames_per_step
    if x.shape[-2] < need:
        raise AlignmentError(f"{x.shape[-2]} MFCC frames cannot cover {video_T} steps "
                             f"x {frames_per_step} frames")
    m = x.shape[-1]
    lead = x.shape[:-2]
    grouped = x[..., :need, :].reshape(*lead, video_T, frames_per_step, m)
    if mode == "mean":
        return grouped.mean(axis=-2)
    if mode == "stack":
        return grouped.reshape(*lead, video_T, frames_per_step * m)
    raise ConfigError(f"unknown alignment mode {mode!r}")


def aligned_width(n_mfcc: int, frames_per_step: int, mode: str) -> int:
    return n_mfcc * frames_per_step if mode == "stack" else n_mfcc


# -- file formats ------------------------------------------------------------
def read_wav(path) -> AudioClip:
    """PCM 16-bit mono WAV -> samples scaled to [-1, 1)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1 or wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit mono PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return AudioClip(pcm / 32768.0, rate)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(clip.sample_rate))
        wf.writeframes(pcm.tobytes())


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_raw_audio(path, clip: AudioClip) -> None:
    """float32 samples plus a one-line JSON sidecar next to them."""
    path = Path(path)
    data = clip.samples.astype("<f4")
    path.write_bytes(data.tobytes())
    _sidecar(path).write_text(json.dumps({"sample_rate": int(clip.sample_rate),
                                          "length": int(data.size)}) + "\n")


def read_raw_audio(path) -> AudioClip:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    if data.size != int(meta["length"]):
        raise ValueError(f"{path}: sidecar says {meta['length']} samples, found {data.size}")
    return AudioClip(data.astype(np.float64), int(meta["sample_rate"]))


def load_audio(path) -> AudioClip:
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path)
    return read_raw_audio(path)
