"""Encoder backends behind one small surface.

Two specs are understood:

- ``dummy:DIM`` or ``dummy:DIM:SEED``: deterministic hash-based unit
  vectors, no ML frameworks involved. Useful for plumbing tests and dry
  runs of the export pipeline.
- a local directory holding a CLIP-style checkpoint saved by
  ``transformers`` (model, tokenizer, image processor). torch and
  transformers are imported only on this path.

Both produce unit-normalized float32 rows; image vectors depend only on
file content, so the same picture under two ids embeds identically.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ModelLoadError
from .store import TEXT_BUDGET, truncate_text


def _unit_f32(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float32)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("encoder produced a zero vector")
    return rows / norms


class DummyEncoder:
    def __init__(self, dim: int, seed: int = 0):
        if dim < 2:
            raise ModelLoadError("dummy encoder dim must be at least 2")
        self.dim = dim
        self.seed = seed

    def _vector(self, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(payload).digest()
        rng = np.random.default_rng(
            [self.seed, int.from_bytes(digest[:8], "little")]
        )
        return rng.standard_normal(self.dim)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        rows = [self._vector(b"text\0" + truncate_text(t).encode("utf-8")) for t in texts]
        return _unit_f32(np.stack(rows))

    def encode_image_files(self, paths: Sequence[Path]) -> np.ndarray:
        if not paths:
            return np.zeros((0, self.dim), dtype=np.float32)
        rows = [self._vector(b"image\0" + Path(p).read_bytes()) for p in paths]
        return _unit_f32(np.stack(rows))


class ClipEncoder:
    def __init__(self, model_dir: str | Path):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(f"CLIP support needs torch and transformers: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_dir)
            self._processor = CLIPProcessor.from_pretrained(model_dir)
        except Exception as exc:
            raise ModelLoadError(f"cannot load a CLIP checkpoint from {model_dir}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.dim = int(self._model.config.projection_dim)
        self._max_tokens = int(self._model.config.text_config.max_position_embeddings)

    @staticmethod
    def _features(output):
        # transformers >= 5 returns a pooled-output object, older
        # versions the tensor itself
        return output.pooler_output if hasattr(output, "pooler_output") else output

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        batch = self._processor(
            text=[truncate_text(t, TEXT_BUDGET) for t in texts],
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self._max_tokens,
        )
        with self._torch.no_grad():
            output = self._model.get_text_features(
                input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
            )
        return _unit_f32(self._features(output).cpu().numpy())

    def encode_image_files(self, paths: Sequence[Path]) -> np.ndarray:
        if not paths:
            return np.zeros((0, self.dim), dtype=np.float32)
        from PIL import Image

        images = [Image.open(p).convert("RGB") for p in paths]
        batch = self._processor(images=images, return_tensors="pt")
        with self._torch.no_grad():
            output = self._model.get_image_features(pixel_values=batch["pixel_values"])
        return _unit_f32(self._features(output).cpu().numpy())


def load_encoder(model_id: str):
    """Resolve a model spec to an encoder, or raise ModelLoadError."""
    if model_id.startswith("dummy:"):
        parts = model_id.split(":")
        try:
            dim = int(parts[1])
            seed = int(parts[2]) if len(parts) > 2 else 0
        except (IndexError, ValueError):
            raise ModelLoadError(
                f"dummy spec must be dummy:DIM or dummy:DIM:SEED, got {model_id!r}"
            ) from None
        return DummyEncoder(dim, seed)
    if Path(model_id).is_dir():
        return ClipEncoder(model_id)
    raise ModelLoadError(
        f"{model_id!r} is neither a dummy: spec nor a local model directory"
    )
