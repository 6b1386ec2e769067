"""Fused relevance scoring and candidate ranking.

Every (descriptor, photo) pair gets two cosine similarities: a scene score
against the photo's object-list text and a vision score against the image
embedding. The retrieval score is their weighted sum,

    fused = scene + vision_weight * vision,

with vision_weight = 0 collapsing to text-only retrieval. Candidates are
ordered by fused score, ties broken by ascending photo index so rankings
are total and reproducible. Adapters, when given, are applied as a matrix
multiply followed by renormalization; the zero-shot path uses identity
matrices through the exact same code so the two cannot drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .corpus import Corpus, render_object_list
from .embeddings import Encoder
from .errors import (
    DegenerateWeightsError,
    DimMismatchError,
    ShapeMismatchError,
    ValidationError,
    ZeroVectorError,
)

if TYPE_CHECKING:
    from .descriptors import Descriptor
    from .training import AdapterParams


@dataclass
class FusionConfig:
    """How scene and vision scores combine. vision_weight is the lambda knob."""

    vision_weight: float = 1.0

    def __post_init__(self):
        if self.vision_weight < 0:
            raise ValueError("vision_weight must be non-negative")


@dataclass
class ScoreMatrix:
    dialogue_ids: list[str]
    photo_ids: list[str]
    scene: np.ndarray  # (n_dialogues, n_photos) float64 in [-1, 1]
    vision: np.ndarray


@dataclass
class Ranking:
    dialogue_id: str
    photo_ids: list[str]
    scores: list[float] = field(repr=False)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two unit vectors, clipped into [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"vector shapes differ: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def fuse(scene_score, vision_score, config: FusionConfig | None = None):
    """Weighted sum of scene and vision scores; works on scalars or arrays."""
    config = config or FusionConfig()
    return scene_score + config.vision_weight * vision_score


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVectorError("adapter produced a zero vector")
    return matrix / norms


def _adapter_matrices(adapters: "AdapterParams | None", dim: int):
    if adapters is None:
        eye = np.eye(dim, dtype=np.float64)
        return eye, eye, eye
    a_desc = np.asarray(adapters.A_desc, dtype=np.float64)
    if a_desc.shape != (dim, dim):
        raise DimMismatchError(
            f"adapters are {a_desc.shape[0]}-dimensional but embeddings are {dim}-dimensional"
        )
    return (
        a_desc,
        np.asarray(adapters.A_obj, dtype=np.float64),
        np.asarray(adapters.A_img, dtype=np.float64),
    )


def score_all(
    descriptors: Sequence["Descriptor"],
    corpus: Corpus,
    encoder: Encoder,
    adapters: "AdapterParams | None" = None,
) -> ScoreMatrix:
    """Score every descriptor against every photo in the corpus.

    Descriptors are matched to dialogues by id and every dialogue needs
    exactly one. Rows follow corpus dialogue order, columns corpus photo
    order. Entries are float64 cosines clipped into [-1, 1].
    """
    by_id: dict[str, Descriptor] = {}
    for descriptor in descriptors:
        by_id.setdefault(descriptor.dialogue_id, descriptor)
    ordered = []
    for dialogue in corpus.dialogues:
        if dialogue.id not in by_id:
            raise ValidationError(f"no descriptor for dialogue {dialogue.id!r}")
        ordered.append(by_id[dialogue.id])

    desc_raw = encoder.encode_texts([d.text for d in ordered]).astype(np.float64)
    obj_raw = encoder.encode_texts(
        [render_object_list(p.objects) for p in corpus.photos]
    ).astype(np.float64)
    img_raw = encoder.encode_images([p.image_ref for p in corpus.photos]).astype(np.float64)

    dim = obj_raw.shape[1]
    a_desc, a_obj, a_img = _adapter_matrices(adapters, dim)
    desc_t = _normalize_rows(desc_raw @ a_desc.T)
    obj_t = _normalize_rows(obj_raw @ a_obj.T)
    img_t = _normalize_rows(img_raw @ a_img.T)

    scene = np.clip(desc_t @ obj_t.T, -1.0, 1.0)
    vision = np.clip(desc_t @ img_t.T, -1.0, 1.0)
    return ScoreMatrix(
        dialogue_ids=[d.id for d in corpus.dialogues],
        photo_ids=[p.id for p in corpus.photos],
        scene=scene,
        vision=vision,
    )


def _order_row(fused_row: np.ndarray) -> np.ndarray:
    # stable sort on the negated scores keeps ties in ascending photo index
    return np.argsort(-fused_row, kind="stable")


def rank(matrix: ScoreMatrix, config: FusionConfig | None = None) -> list[Ranking]:
    """Order candidates per dialogue by fused score, best first."""
    config = config or FusionConfig()
    fused = fuse(matrix.scene, matrix.vision, config)
    rankings = []
    for i, dialogue_id in enumerate(matrix.dialogue_ids):
        order = _order_row(fused[i])
        rankings.append(
            Ranking(
                dialogue_id=dialogue_id,
                photo_ids=[matrix.photo_ids[j] for j in order],
                scores=[float(fused[i, j]) for j in order],
            )
        )
    return rankings


# ---- ensembling -------------------------------------------------------------------


def _zscore_rows(fused: np.ndarray) -> np.ndarray:
    mean = fused.mean(axis=1, keepdims=True)
    std = fused.std(axis=1, keepdims=True)
    safe = np.where(std > 0.0, std, 1.0)
    return np.where(std > 0.0, (fused - mean) / safe, 0.0)


def _rank_rows(fused: np.ndarray) -> np.ndarray:
    scores = np.empty_like(fused)
    for i in range(fused.shape[0]):
        order = _order_row(fused[i])
        positions = np.empty(fused.shape[1], dtype=np.float64)
        positions[order] = np.arange(1, fused.shape[1] + 1, dtype=np.float64)
        scores[i] = -positions
    return scores


def ensemble(
    matrices: Sequence[ScoreMatrix],
    config: FusionConfig | None = None,
    weights: Sequence[float] | None = None,
    method: str = "zscore",
) -> list[Ranking]:
    """Combine several variants' score matrices into one ranking.

    Each matrix's fused scores are normalized per dialogue (z-scores by
    default, sigma zero mapping to all zeros; method "rank" uses negated
    1-based rank positions instead) and averaged under the given weights.
    Matrices must share dialogue and photo index sets; weights must be
    non-negative and not all zero.
    """
    if not matrices:
        raise ShapeMismatchError("ensemble needs at least one matrix")
    first = matrices[0]
    for matrix in matrices[1:]:
        if matrix.dialogue_ids != first.dialogue_ids or matrix.photo_ids != first.photo_ids:
            raise ShapeMismatchError("matrices disagree on dialogue or photo index sets")
    if weights is None:
        weights = [1.0] * len(matrices)
    if len(weights) != len(matrices):
        raise ShapeMismatchError(
            f"{len(weights)} weights for {len(matrices)} matrices"
        )
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights):
        raise DegenerateWeightsError("weights must be non-negative")
    total = sum(weights)
    if total == 0.0:
        raise DegenerateWeightsError("weights sum to zero")
    if method not in ("zscore", "rank"):
        raise ValueError(f"unknown ensemble method {method!r}")

    normalize_rows = _zscore_rows if method == "zscore" else _rank_rows
    combined = np.zeros_like(first.scene)
    for weight, matrix in zip(weights, matrices):
        fused = fuse(matrix.scene, matrix.vision, config)
        combined += weight * normalize_rows(fused)
    combined /= total

    rankings = []
    for i, dialogue_id in enumerate(first.dialogue_ids):
        order = _order_row(combined[i])
        rankings.append(
            Ranking(
                dialogue_id=dialogue_id,
                photo_ids=[first.photo_ids[j] for j in order],
                scores=[float(combined[i, j]) for j in order],
            )
        )
    return rankings


# ---- persistence ------------------------------------------------------------------


def matrix_to_store(matrix: ScoreMatrix):
    """Pack a score matrix into the binary store layout (one scalar per key)."""
    from .embeddings import EmbeddingStore

    store = EmbeddingStore(dim=1)
    for i in range(len(matrix.dialogue_ids)):
        for j in range(len(matrix.photo_ids)):
            store.put(f"scene:{i}:{j}", np.array([matrix.scene[i, j]], dtype=np.float32))
            store.put(f"vision:{i}:{j}", np.array([matrix.vision[i, j]], dtype=np.float32))
    return store


def matrix_from_store(store, dialogue_ids: list[str], photo_ids: list[str]) -> ScoreMatrix:
    n, m = len(dialogue_ids), len(photo_ids)
    scene = np.zeros((n, m), dtype=np.float64)
    vision = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            scene[i, j] = float(store.get(f"scene:{i}:{j}")[0])
            vision[i, j] = float(store.get(f"vision:{i}:{j}")[0])
    return ScoreMatrix(
        dialogue_ids=list(dialogue_ids), photo_ids=list(photo_ids), scene=scene, vision=vision
    )
