"""Synthetic corpora and embedding tasks for tests and demos.

Two builders cover most needs. ``token_corpus`` makes dialogues whose
words overlap exactly with their target photo's object list, which gives
the mock encoder an unambiguous signal (useful for sanity checks where
R@1 should hit 1.0, and for perturbation studies where corrupting the
object lists visibly hurts). ``rotation_task`` builds frozen embeddings
where candidates are a fixed rotation of the descriptors plus noise: a
linear adapter can undo the rotation, so training should lift recall from
chance to near-perfect.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Dialogue, PhotoCandidate, Turn
from .descriptors import Descriptor, DescriptorVariant, generate_descriptor
from .embeddings import EmbeddingStore, image_key, normalize, text_key


def token_corpus(
    n_photos: int = 20,
    n_dialogues: int | None = None,
    objects_per_photo: int = 4,
    seed: int = 0,
) -> Corpus:
    """A corpus where each dialogue names exactly its target's objects."""
    if n_dialogues is None:
        n_dialogues = n_photos
    if n_dialogues > n_photos:
        raise ValueError("need at least as many photos as dialogues")
    rng = np.random.default_rng(seed)
    photos = []
    for i in range(n_photos):
        objects = [f"thing{i}x{j}" for j in range(objects_per_photo)]
        photos.append(PhotoCandidate(id=f"p{i}", image_ref=f"im{i}", objects=objects))
    dialogues = []
    openers = ["what did you get up to", "any photos from the weekend", "how was the trip"]
    for i in range(n_dialogues):
        opener = openers[int(rng.integers(len(openers)))]
        mention = " and ".join(photos[i].objects)
        dialogues.append(
            Dialogue(
                id=f"d{i}",
                turns=[
                    Turn(speaker="B", text=f"{opener}?"),
                    Turn(speaker="A", text=f"I took a great shot of {mention}."),
                ],
                sharer="A",
                target_photo_id=photos[i].id,
            )
        )
    return Corpus(photos=photos, dialogues=dialogues)


def dialogue_descriptors(corpus: Corpus) -> list[Descriptor]:
    """Plain concatenated-utterance descriptors for every dialogue."""
    return [
        generate_descriptor(dialogue, DescriptorVariant.DIALOGUE)
        for dialogue in corpus.dialogues
    ]


def rotation_task(
    n_train: int = 200,
    n_heldout: int = 64,
    dim: int = 16,
    noise: float = 0.05,
    seed: int = 0,
):
    """Frozen-embedding task solvable by a linear adapter.

    Descriptor embeddings are random unit vectors; object and image
    embeddings of the matching photo are a shared random rotation of the
    descriptor plus Gaussian noise. Returns (train_corpus, train_descriptors,
    heldout_corpus, heldout_descriptors, store): the store holds every
    embedding keyed the way a StoreEncoder expects.
    """
    rng = np.random.default_rng(seed)
    rotation, _ = np.linalg.qr(rng.standard_normal((dim, dim)))

    store = EmbeddingStore(dim=dim)

    def build_split(tag: str, count: int):
        photos, dialogues, descriptors = [], [], []
        for i in range(count):
            desc_vec = normalize(rng.standard_normal(dim))
            obj_vec = normalize(rotation @ desc_vec + noise * rng.standard_normal(dim))
            img_vec = normalize(rotation @ desc_vec + noise * rng.standard_normal(dim))
            desc_text = f"{tag} probe {i}"
            object_name = f"{tag}item{i}"
            image_ref = f"{tag}-im{i}"
            store.put(text_key(desc_text), desc_vec.astype(np.float32))
            store.put(text_key(object_name), obj_vec.astype(np.float32))
            store.put(image_key(image_ref), img_vec.astype(np.float32))
            photos.append(
                PhotoCandidate(id=f"{tag}-p{i}", image_ref=image_ref, objects=[object_name])
            )
            dialogues.append(
                Dialogue(
                    id=f"{tag}-d{i}",
                    turns=[Turn(speaker="A", text=desc_text)],
                    sharer="A",
                    target_photo_id=f"{tag}-p{i}",
                )
            )
        corpus = Corpus(photos=photos, dialogues=dialogues)
        descriptors = dialogue_descriptors(corpus)
        return corpus, descriptors

    train_corpus, train_descriptors = build_split("train", n_train)
    heldout_corpus, heldout_descriptors = build_split("held", n_heldout)
    return train_corpus, train_descriptors, heldout_corpus, heldout_descriptors, store
