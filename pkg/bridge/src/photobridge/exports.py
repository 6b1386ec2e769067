"""Embedding export jobs.

A job names the encoder, the inputs, the output store, and a batch size.
Text records are keyed by content hash, so duplicate texts collapse to
one record; image records are keyed by the caller's id, so the same file
may appear under several ids. Outputs are written atomically and the
vector width never varies within a store.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoders import load_encoder
from .store import image_key, text_key, write_store


@dataclass(frozen=True)
class BridgeJob:
    model_id: str
    manifest: tuple = field(default_factory=tuple)
    output: Path = Path("embeddings.embs")
    batch_size: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        object.__setattr__(self, "manifest", tuple(self.manifest))
        object.__setattr__(self, "output", Path(self.output))


def _batched(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def export_text_embeddings(job: BridgeJob) -> Path:
    """Embed the job's texts into a store keyed by content hash."""
    encoder = load_encoder(job.model_id)
    unique: dict[str, str] = {}
    for text in job.manifest:
        if not isinstance(text, str):
            raise TypeError(f"text manifest entries must be strings, got {type(text).__name__}")
        unique.setdefault(text_key(text), text)

    keys = list(unique)
    records: dict[str, np.ndarray] = {}
    for chunk in _batched(keys, job.batch_size):
        vectors = encoder.encode_texts([unique[k] for k in chunk])
        for key, vector in zip(chunk, vectors):
            records[key] = vector
    return write_store(records, encoder.dim, job.output)


def export_image_embeddings(job: BridgeJob) -> Path:
    """Embed the job's (id, path) images into a store keyed by id."""
    encoder = load_encoder(job.model_id)
    entries: list[tuple[str, Path]] = []
    seen_ids: set[str] = set()
    for entry in job.manifest:
        image_id, path = entry
        if not isinstance(image_id, str) or not image_id:
            raise TypeError("image ids must be non-empty strings")
        if image_id in seen_ids:
            raise ValueError(f"duplicate image id {image_id!r} in manifest")
        seen_ids.add(image_id)
        entries.append((image_id, Path(path)))

    # check inputs up front so a bad entry never leaves a partial store
    for image_id, path in entries:
        if not path.is_file():
            raise FileNotFoundError(f"image file for id {image_id!r} is missing: {path}")

    records: dict[str, np.ndarray] = {}
    for chunk in _batched(entries, job.batch_size):
        vectors = encoder.encode_image_files([path for _, path in chunk])
        for (image_id, _), vector in zip(chunk, vectors):
            records[image_key(image_id)] = vector
    return write_store(records, encoder.dim, job.output)
