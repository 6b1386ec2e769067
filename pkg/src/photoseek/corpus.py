"""Photo repositories and dialogues, plus controlled corruption of object lists.

A corpus couples a fixed photo repository with the dialogues that reference
it. Photos carry an object list (short noun phrases describing what the
photo shows); dialogues carry the turns leading up to a photo share and,
for training and evaluation, the id of the photo that was actually shared.

The on-disk form is JSONL with one record per line:

    {"kind": "photo", "id": "p1", "image_ref": "img/p1.jpg", "objects": ["dog", "ball"]}
    {"kind": "dialogue", "id": "d1", "turns": [{"speaker": "A", "text": "hi"}],
     "sharer": "A", "target_photo_id": "p1"}

Loading validates and rejects; it never repairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyVocabularyError, ParseError, ValidationError

SPEAKERS = ("A", "B")
PERTURB_MODES = ("missing", "incorrect", "both")


@dataclass
class Turn:
    speaker: str
    text: str


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]
    sharer: str
    target_photo_id: str | None = None


@dataclass
class PhotoCandidate:
    id: str
    image_ref: str
    objects: list[str]


@dataclass
class Corpus:
    photos: list[PhotoCandidate]
    dialogues: list[Dialogue]
    provided_descriptors: dict = field(default_factory=dict)

    def photo_index(self) -> dict[str, int]:
        """Map photo id to its position in the candidate list."""
        return {p.id: i for i, p in enumerate(self.photos)}

    def dialogue_by_id(self) -> dict[str, Dialogue]:
        return {d.id: d for d in self.dialogues}


# ---- loading and saving -----------------------------------------------------

_PHOTO_KEYS = {"kind", "id", "image_ref", "objects"}
_DIALOGUE_KEYS = {"kind", "id", "turns", "sharer", "target_photo_id"}
_TURN_KEYS = {"speaker", "text"}


def _expect_str(record: dict, key: str, line_no: int) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise ParseError(f"field {key!r} must be a string", line_no)
    return value


def _parse_photo(record: dict, line_no: int) -> PhotoCandidate:
    extra = set(record) - _PHOTO_KEYS
    if extra:
        raise ParseError(f"unexpected photo fields {sorted(extra)}", line_no)
    pid = _expect_str(record, "id", line_no)
    image_ref = _expect_str(record, "image_ref", line_no)
    raw_objects = record.get("objects")
    if not isinstance(raw_objects, list) or any(not isinstance(o, str) for o in raw_objects):
        raise ParseError("field 'objects' must be a list of strings", line_no)
    objects = [o.lower() for o in raw_objects]
    if len(set(objects)) != len(objects):
        raise ValidationError(f"photo {pid!r} (line {line_no}): duplicate object strings")
    return PhotoCandidate(id=pid, image_ref=image_ref, objects=objects)


def _parse_dialogue(record: dict, line_no: int) -> Dialogue:
    extra = set(record) - _DIALOGUE_KEYS
    if extra:
        raise ParseError(f"unexpected dialogue fields {sorted(extra)}", line_no)
    did = _expect_str(record, "id", line_no)
    sharer = _expect_str(record, "sharer", line_no)
    if sharer not in SPEAKERS:
        raise ParseError(f"sharer must be one of {SPEAKERS}", line_no)
    raw_turns = record.get("turns")
    if not isinstance(raw_turns, list) or not raw_turns:
        raise ValidationError(f"dialogue {did!r} (line {line_no}): turns must be a non-empty list")
    turns = []
    for raw in raw_turns:
        if not isinstance(raw, dict) or set(raw) != _TURN_KEYS:
            raise ParseError("each turn needs exactly 'speaker' and 'text'", line_no)
        speaker, text = raw["speaker"], raw["text"]
        if speaker not in SPEAKERS:
            raise ParseError(f"turn speaker must be one of {SPEAKERS}", line_no)
        if not isinstance(text, str):
            raise ParseError("turn text must be a string", line_no)
        if not text.strip():
            raise ValidationError(f"dialogue {did!r} (line {line_no}): empty turn text")
        turns.append(Turn(speaker=speaker, text=text))
    target = record.get("target_photo_id")
    if target is not None and not isinstance(target, str):
        raise ParseError("field 'target_photo_id' must be a string when present", line_no)
    return Dialogue(id=did, turns=turns, sharer=sharer, target_photo_id=target)


def load_corpus(path: str | Path, split: str | None = None) -> Corpus:
    """Read a corpus from a JSONL file.

    ``path`` may be a directory, in which case ``split`` names the file
    inside it (``{split}.jsonl``). Raises OSError on unreadable paths,
    ParseError (with the offending line number) on malformed records, and
    ValidationError on duplicate ids, dangling targets, empty turns, or an
    empty photo repository.
    """
    p = Path(path)
    if p.is_dir():
        if split is None:
            raise ValidationError(f"{p} is a directory; pass split to pick a file")
        p = p / f"{split}.jsonl"
    photos: list[PhotoCandidate] = []
    dialogues: list[Dialogue] = []
    with open(p, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            if not isinstance(record, dict):
                raise ParseError("record must be a JSON object", line_no)
            kind = record.get("kind")
            if kind == "photo":
                photos.append(_parse_photo(record, line_no))
            elif kind == "dialogue":
                dialogues.append(_parse_dialogue(record, line_no))
            else:
                raise ParseError(f"unknown record kind {kind!r}", line_no)

    if not photos:
        raise ValidationError("corpus has no photos")
    seen_photos: set[str] = set()
    for photo in photos:
        if photo.id in seen_photos:
            raise ValidationError(f"duplicate photo id {photo.id!r}")
        seen_photos.add(photo.id)
    seen_dialogues: set[str] = set()
    for dialogue in dialogues:
        if dialogue.id in seen_dialogues:
            raise ValidationError(f"duplicate dialogue id {dialogue.id!r}")
        seen_dialogues.add(dialogue.id)
        if dialogue.target_photo_id is not None and dialogue.target_photo_id not in seen_photos:
            raise ValidationError(
                f"dialogue {dialogue.id!r} targets unknown photo {dialogue.target_photo_id!r}"
            )
    return Corpus(photos=photos, dialogues=dialogues)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as JSONL, photos first, preserving list order."""
    with open(path, "w", encoding="utf-8") as fh:
        for photo in corpus.photos:
            record = {
                "kind": "photo",
                "id": photo.id,
                "image_ref": photo.image_ref,
                "objects": photo.objects,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        for dialogue in corpus.dialogues:
            record = {
                "kind": "dialogue",
                "id": dialogue.id,
                "turns": [{"speaker": t.speaker, "text": t.text} for t in dialogue.turns],
                "sharer": dialogue.sharer,
            }
            if dialogue.target_photo_id is not None:
                record["target_photo_id"] = dialogue.target_photo_id
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def attach_provided_descriptors(corpus: Corpus, descriptors: Iterable) -> Corpus:
    """Return a copy of ``corpus`` with externally generated descriptors attached.

    Each item needs ``dialogue_id`` and ``text`` attributes (the descriptor
    cache loader yields these). Ids must resolve to dialogues in the corpus.
    """
    known = {d.id for d in corpus.dialogues}
    provided = {}
    for desc in descriptors:
        if desc.dialogue_id not in known:
            raise ValidationError(f"provided descriptor for unknown dialogue {desc.dialogue_id!r}")
        provided[desc.dialogue_id] = desc
    return replace(corpus, provided_descriptors=provided)


# ---- rendering and perturbation ----------------------------------------------


def render_object_list(objects: Sequence[str]) -> str:
    """Join object strings into the textual form given to encoders."""
    return ", ".join(objects)


def affected_count(rate: float, n: int) -> int:
    """Number of objects touched at a given rate: round(rate * n), half up."""
    return int(math.floor(rate * n + 0.5))


def _draw_replacement(
    rng: np.random.Generator, vocabulary: Sequence[str], current: set[str]
) -> str:
    pool = [w for w in vocabulary if w not in current]
    if not pool:
        raise EmptyVocabularyError("no replacement string available outside the current list")
    return pool[int(rng.integers(len(pool)))]


def perturb_objects(
    corpus: Corpus,
    rate: float,
    mode: str,
    seed: int,
    vocabulary: Sequence[str] | None = None,
) -> Corpus:
    """Corrupt object lists to simulate an unreliable object detector.

    For each photo with n objects, exactly round(rate * n) of them are
    affected, chosen by a seeded shuffle. Mode 'missing' deletes them,
    'incorrect' replaces each with a uniformly drawn vocabulary string not
    already in the list, and 'both' flips a fair coin per affected object.
    The result is a pure function of (corpus, rate, mode, seed, vocabulary);
    dialogues and photo ids are untouched.

    ``vocabulary`` defaults to the union of object strings in ``corpus``;
    pass the training-split vocabulary to reproduce the evaluation protocol
    of substituting detector outputs with foreign training objects.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    if mode not in PERTURB_MODES:
        raise ValueError(f"mode must be one of {PERTURB_MODES}, got {mode!r}")
    if vocabulary is None:
        vocab = sorted({o for p in corpus.photos for o in p.objects})
    else:
        vocab = sorted({w.lower() for w in vocabulary})

    rng = np.random.default_rng(seed)
    new_photos = []
    for photo in corpus.photos:
        n = len(photo.objects)
        k = affected_count(rate, n)
        if k == 0:
            new_photos.append(replace(photo, objects=list(photo.objects)))
            continue
        order = rng.permutation(n)
        affected = sorted(int(i) for i in order[:k])
        working = list(photo.objects)
        to_delete: set[int] = set()
        for idx in affected:
            if mode == "missing":
                to_delete.add(idx)
                continue
            if mode == "both" and int(rng.integers(2)) == 0:
                to_delete.add(idx)
                continue
            working[idx] = _draw_replacement(rng, vocab, set(working))
        kept = [o for i, o in enumerate(working) if i not in to_delete]
        new_photos.append(replace(photo, objects=kept))
    return replace(corpus, photos=new_photos)
