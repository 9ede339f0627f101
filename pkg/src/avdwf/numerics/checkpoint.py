"""Parameter checkpoints: JSON header followed by little-endian float64 data.

Layout::

    8 bytes   header length in bytes (little-endian uint64)
    N bytes   UTF-8 JSON header {"format", "metadata", "tensors": [{name, shape, offset}]}
    ...       concatenated float64 ('<f8') arrays; offsets are relative to this block
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FORMAT = "avdwf-checkpoint-v1"


def encode_checkpoint(named_arrays, metadata: dict | None = None) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for name, arr in named_arrays:
        a = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blob = a.tobytes(order="C")
        blobs.append(blob)
        offset += len(blob)
    header = {"format": FORMAT, "metadata": metadata or {}, "tensors": entries}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(head)) + head + b"".join(blobs)


def decode_checkpoint(raw: bytes) -> tuple[list[tuple[str, np.ndarray]], dict]:
    (n,) = struct.unpack_from("<Q", raw, 0)
    header = json.loads(raw[8:8 + n].decode("utf-8"))
    if header.get("format") != FORMAT:
        raise ValueError(f"unrecognised checkpoint format {header.get('format')!r}")
    body = memoryview(raw)[8 + n:]
    out = []
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=entry["offset"])
        out.append((entry["name"], arr.reshape(tuple(entry["shape"])).astype(np.float64)))
    return out, header.get("metadata", {})


def save_checkpoint(path, named_arrays, metadata: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(named_arrays, metadata))


def load_checkpoint(path) -> tuple[list[tuple[str, np.ndarray]], dict]:
    return decode_checkpoint(Path(path).read_bytes())
