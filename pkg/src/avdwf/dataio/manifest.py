"""Sample manifests: on-disk sample layout, JSON Lines serialization, splitting and balancing.

A sample directory holds::

    label.txt              "real" or "fake" (optionally followed by a forgery type)
    frames/order.txt       PNG file names, one per line, in temporal order
    frames/*.png           8-bit grayscale or RGB face crops
      -- or --
    frames.f32             packed float32 [T, C, H, W] with a frames.json sidecar {"shape": [...]}
    audio.wav | audio.f32  mono audio (PCM16 WAV, or float32 with a JSON sidecar)
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from ..audio import AudioClip, load_audio, write_raw_audio, write_wav
from ..encoders import FaceBlock
from ..errors import BalanceError, ManifestError, ShapeError
from ..training.experiment import SPLITS, split_counts

CLASSES = ("real", "fake")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    frames: str
    audio: str
    label: str
    split: str
    forgery_type: str = ""

    def __post_init__(self):
        if self.label not in CLASSES:
            raise ManifestError(f"{self.id}: label must be one of {CLASSES}, got {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"{self.id}: split must be one of {SPLITS}, got {self.split!r}")


@dataclass
class SampleManifest:
    entries: list[ManifestEntry]
    rejects: list[dict] = field(default_factory=list)

    def __post_init__(self):
        dupes = [k for k, n in Counter(e.id for e in self.entries).items() if n > 1]
        if dupes:
            raise ManifestError(f"duplicate sample ids: {sorted(dupes)[:5]}")

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self, split: str | None = None) -> dict[str, int]:
        c = Counter(e.label for e in self.entries if split is None or e.split == split)
        return {k: c.get(k, 0) for k in CLASSES}

    def stats(self) -> dict[str, dict[str, int]]:
        """Real/fake counts for each split."""
        return {s: self.counts(s) for s in SPLITS}

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e), sort_keys=True, separators=(",", ":")) + "\n"
                       for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "SampleManifest":
        entries = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry(**json.loads(line)))
            except (TypeError, json.JSONDecodeError) as exc:
                raise ManifestError(f"manifest line {lineno}: {exc}") from exc
        return cls(entries)

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SampleManifest":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))

    def validate(self) -> None:
        """Load every referenced file; raise ManifestError naming the first failure."""
        for e in self.entries:
            try:
                load_face_block(e.frames)
                load_audio(e.audio)
            except Exception as exc:  # noqa: BLE001 -- report any loader failure uniformly
                raise ManifestError(f"{e.id}: {exc}") from exc


# -- sample directories ---------------------------------------------------------
def load_face_block(path) -> FaceBlock:
    """A PNG frame directory (with order.txt) or a packed float32 file."""
    path = Path(path)
    if path.is_dir():
        order = path / "order.txt"
        if not order.exists():
            raise ManifestError(f"{path}: missing order.txt")
        names = [n.strip() for n in order.read_text().splitlines() if n.strip()]
        if not names:
            raise ManifestError(f"{path}: order.txt lists no frames")
        frames = []
        for name in names:
            with Image.open(path / name) as img:
                arr = np.asarray(img.convert("RGB" if img.mode in ("RGB", "RGBA", "P") else "L"),
                                 dtype=np.float64) / 255.0
            frames.append(arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1))
        if len({f.shape for f in frames}) != 1:
            raise ShapeError(f"{path}: frames differ in resolution")
        return FaceBlock(np.stack(frames))
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.fromfile(path, dtype="<f4").astype(np.float64)
    return FaceBlock(data.reshape(meta["shape"]))


def write_packed_frames(path, block: FaceBlock) -> None:
    path = Path(path)
    block.frames.astype("<f4").tofile(path)
    path.with_suffix(".json").write_text(json.dumps({"shape": list(block.frames.shape)}) + "\n")


def write_png_frames(directory, block: FaceBlock) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for t, frame in enumerate(block.frames):
        pixels = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
        img = Image.fromarray(pixels[0] if pixels.shape[0] == 1 else pixels.transpose(1, 2, 0))
        names.append(f"{t:04d}.png")
        img.save(directory / names[-1])
    (directory / "order.txt").write_text("\n".join(names) + "\n")


def write_sample_dir(directory, block: FaceBlock, audio: AudioClip, label: str,
                     forgery_type: str = "", packed: bool = True) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if packed:
        write_packed_frames(directory / "frames.f32", block)
        write_raw_audio(directory / "audio.f32", audio)
    else:
        write_png_frames(directory / "frames", block)
        write_wav(directory / "audio.wav", audio)
    (directory / "label.txt").write_text(f"{label} {forgery_type}".strip() + "\n")


def _sample_files(directory: Path) -> tuple[Path, Path, str, str]:
    label_file = directory / "label.txt"
    if not label_file.exists():
        raise ManifestError("missing label.txt")
    words = label_file.read_text().split()
    if not words or words[0] not in CLASSES:
        raise ManifestError(f"label.txt must start with one of {CLASSES}")
    frames = directory / "frames.f32" if (directory / "frames.f32").exists() else directory / "frames"
    audio = next((directory / n for n in ("audio.wav", "audio.f32") if (directory / n).exists()),
                 None)
    if audio is None:
        raise ManifestError("no audio.wav or audio.f32")
    load_face_block(frames)
    load_audio(audio)
    return frames, audio, words[0], words[1] if len(words) > 1 else ""


def build_manifest(root_dir, split_ratio=(7, 1, 2), seed: int = 0) -> SampleManifest:
    """Scan per-sample directories, validate each, and assign a seeded shuffled split.

    Unreadable samples are listed in ``rejects`` with the reason rather than
    aborting the scan.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ManifestError(f"{root} is not a directory")
    found, rejects = [], []
    for directory in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            found.append((directory.name, *_sample_files(directory)))
        except Exception as exc:  # noqa: BLE001 -- any failure becomes a reject entry
            rejects.append({"path": str(directory), "reason": f"{type(exc).__name__}: {exc}"})
    if not found:
        raise ManifestError(f"no loadable samples under {root} ({len(rejects)} rejected)")
    order = np.random.default_rng(seed).permutation(len(found))
    a, b, _ = split_counts(len(found), split_ratio)
    split_of = {}
    for rank, i in enumerate(order):
        split_of[int(i)] = "train" if rank < a else "val" if rank < a + b else "test"
    entries = [ManifestEntry(id=name, frames=str(frames), audio=str(audio), label=label,
                             split=split_of[i], forgery_type=ftype)
               for i, (name, frames, audio, label, ftype) in enumerate(found)]
    return SampleManifest(entries, rejects)


# -- balancing ----------------------------------------------------------------
@dataclass(frozen=True)
class BalanceReport:
    before: dict[str, int]
    after: dict[str, int]
    target: tuple[float, float]
    strategy: str

    @staticmethod
    def ratio(counts: dict[str, int]) -> str:
        total = counts["real"] + counts["fake"]
        real = round(100 * counts["real"] / total) if total else 0
        return f"{real}:{100 - real}"

    def table(self) -> str:
        rows = [("", "real", "fake", "real:fake"),
                ("before", self.before["real"], self.before["fake"], self.ratio(self.before)),
                ("after", self.after["real"], self.after["fake"], self.ratio(self.after))]
        return "\n".join(f"{a:<8}{b!s:>8}{c!s:>8}{d:>12}" for a, b, c, d in rows)


def target_counts(real: int, fake: int, target, strategy: str = "subsample") -> dict[str, int]:
    """Class sizes that hit ``target`` (real:fake) by shrinking or growing one class."""
    t_real, t_fake = (float(x) for x in target)
    if t_real <= 0 or t_fake <= 0:
        raise BalanceError(f"target ratio must be positive, got {target}")
    if real == 0 or fake == 0:
        raise BalanceError("balancing needs both real and fake samples")
    real_heavy = real * t_fake > fake * t_real
    if strategy == "subsample":
        if real_heavy:
            return {"real": min(real, round(fake * t_real / t_fake)), "fake": fake}
        return {"real": real, "fake": min(fake, round(real * t_fake / t_real))}
    if strategy == "oversample":
        if real_heavy:
            return {"real": real, "fake": max(fake, round(real * t_fake / t_real))}
        return {"real": max(real, round(fake * t_real / t_fake)), "fake": fake}
    raise BalanceError(f"strategy must be 'subsample' or 'oversample', got {strategy!r}")


def balance(manifest: SampleManifest, target_ratio=(1, 1), strategy: str = "subsample",
            seed: int = 0) -> tuple[SampleManifest, BalanceReport]:
    """Resize one class so real:fake matches ``target_ratio`` to within one sample.

    Subsampling keeps a seeded random subset of the majority class in manifest
    order.  Oversampling appends duplicates of minority entries drawn with
    replacement, each tagged ``<id>~<k>`` and keeping the source's split.
    """
    before = manifest.counts()
    want = target_counts(before["real"], before["fake"], target_ratio, strategy)
    rng = np.random.default_rng(seed)
    entries = list(manifest.entries)
    for label in CLASSES:
        members = [i for i, e in enumerate(entries) if e.label == label]
        delta = want[label] - len(members)
        if delta < 0:
            drop = set(rng.choice(members, size=-delta, replace=False).tolist())
            entries = [e for i, e in enumerate(entries) if i not in drop]
        elif delta > 0:
            picks = rng.choice(members, size=delta, replace=True)
            seen: Counter = Counter()
            for i in picks.tolist():
                seen[i] += 1
                src = entries[i]
                entries.append(replace(src, id=f"{src.id}~{seen[i]}"))
    out = SampleManifest(entries, list(manifest.rejects))
    return out, BalanceReport(before, out.counts(), tuple(target_ratio), strategy)


@dataclass
class LoadedSample:
    """A manifest entry with its frames and audio in memory."""

    face_block: FaceBlock
    audio: AudioClip
    label: str
    forgery_type: str
    sample_id: str

    @property
    def y(self) -> int:
        return int(self.label == "fake")


def load_sample_dir(directory) -> LoadedSample:
    directory = Path(directory)
    frames, audio, label, ftype = _sample_files(directory)
    return LoadedSample(load_face_block(frames), load_audio(audio), label, ftype, directory.name)


def load_entries(entries) -> list[LoadedSample]:
    return [LoadedSample(load_face_block(e.frames), load_audio(e.audio), e.label,
                         e.forgery_type, e.id) for e in entries]
