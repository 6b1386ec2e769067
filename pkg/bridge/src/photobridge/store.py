"""Writer for the engine's binary embedding store format.

Implemented from the wire format alone so the bridge stays a separate
artifact: magic "EMBS", version u32, dim u32, count u64 (little-endian
header), then per record a u32 key length, the UTF-8 key, and dim float32
values. Keys follow the engine's conventions: "text:" plus the sha256 of
the truncated UTF-8 text, "image:" plus the caller's id.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"EMBS"
VERSION = 1
TEXT_BUDGET = 4096  # characters hashed and encoded; matches the engine default

_HEADER = struct.Struct("<4sIIQ")
_KEY_LEN = struct.Struct("<I")


def truncate_text(text: str, budget: int = TEXT_BUDGET) -> str:
    return text[:budget]


def text_key(text: str, budget: int = TEXT_BUDGET) -> str:
    digest = hashlib.sha256(truncate_text(text, budget).encode("utf-8")).hexdigest()
    return f"text:{digest}"


def image_key(image_id: str) -> str:
    return f"image:{image_id}"


def write_store(records: dict[str, np.ndarray], dim: int, path: str | Path) -> Path:
    """Write keyed vectors to ``path`` atomically (temp file + rename)."""
    if dim < 1:
        raise ValueError("store dim must be positive")
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    fd, tmp_name = tempfile.mkstemp(dir=parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, dim, len(records)))
            for key, vector in records.items():
                if not key:
                    raise ValueError("store keys must be non-empty")
                arr = np.asarray(vector, dtype=np.float32)
                if arr.shape != (dim,):
                    raise ValueError(
                        f"vector for {key!r} has shape {arr.shape}, store dim is {dim}"
                    )
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"vector for {key!r} holds non-finite values")
                raw_key = key.encode("utf-8")
                fh.write(_KEY_LEN.pack(len(raw_key)))
                fh.write(raw_key)
                fh.write(arr.tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path
