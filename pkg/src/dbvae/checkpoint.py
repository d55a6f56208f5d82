"""Parameter checkpoint file format.

Little-endian binary, bit-exact round trip:

    bytes 0..7    magic  b"DBVAECKP"
    bytes 8..11   format version, uint32 LE
    bytes 12..19  header length H, uint64 LE
    bytes 20..    header: UTF-8 JSON {"meta": {...}, "tensors": [{"name", "shape"}, ...]}
    then          per tensor, in header order: float64 LE values, C order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DBVAECKP"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint file is missing, malformed, or of an unsupported version."""


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Write named float64 arrays plus a JSON-able metadata dict."""
    entries = [{"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()]
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (meta, tensors); inverse of save_checkpoint, bit-exact."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no checkpoint at {path}")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack("<Q", blob[12:20])
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    tensors: dict[str, np.ndarray] = {}
    offset = 20 + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated data for tensor {entry['name']!r}")
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = flat.reshape(shape).astype(np.float64)
        offset += nbytes
    return header["meta"], tensors
