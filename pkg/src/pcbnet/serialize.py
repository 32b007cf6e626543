"""Parameter checkpoints: a versioned binary container of named float64 arrays.

Layout: magic line, 8-byte little-endian header length, UTF-8 JSON header,
then the concatenated row-major float64 buffers. The header carries a format
name, version, arbitrary metadata, and the tensor index (name, shape, offset
in float64 elements). Writes are atomic (temp file + rename) and byte-stable
for identical inputs.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"PCBNET1\n"
FORMAT_NAME = "pcbnet-params"
FORMAT_VERSION = 1


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_params(path: str | Path, tensors: dict[str, np.ndarray],
                meta: dict | None = None) -> None:
    """Write named arrays plus a metadata dict to a single binary file."""
    index = []
    buffers = []
    offset = 0
    for name in sorted(tensors):
        src = np.asarray(tensors[name], dtype=np.float64)
        arr = np.ascontiguousarray(src)  # note: promotes 0-d to 1-d
        index.append({"name": name, "shape": list(src.shape), "offset": offset})
        buffers.append(arr.tobytes())
        offset += arr.size
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "tensors": index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(buffers)
    atomic_write_bytes(path, payload)


def load_params(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (tensors, meta) from a file written by save_params."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValidationError(f"{path}: not a {FORMAT_NAME} file")
    pos = len(MAGIC)
    (header_len,) = struct.unpack("<Q", raw[pos:pos + 8])
    pos += 8
    header = json.loads(raw[pos:pos + header_len].decode("utf-8"))
    if header.get("format") != FORMAT_NAME:
        raise ValidationError(f"{path}: unexpected format {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported version {header.get('version')!r}")
    data_start = pos + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = data_start + entry["offset"] * 8
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = flat.reshape(shape).astype(np.float64)
    return tensors, header["meta"]
