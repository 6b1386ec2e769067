"""PhotoChat raw-release conversion into the engine's corpus JSONL.

The raw schema is pinned strictly: each record is

    {"dialogue_id", "photo_id", "photo_url",
     "photo_description": "Objects in the photo: X, Y",
     "dialogue": [{"user_id": 0|1, "message": str, "share_photo": bool}, ...]}

and anything else raises SchemaError, on the theory that a silent guess
about an unrecognized release does more damage than a loud stop. A split
is every ``{split}*.json`` file in the raw directory, each holding a JSON
array of records.

Conversion keeps the turns strictly before the first share event (that is
the retrieval moment: the model sees what was said, then picks the photo).
Records where nobody shares, or where nothing was said before the share,
have no retrieval task in them and are skipped.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

from .errors import SchemaError

OBJECT_PREFIX = "Objects in the photo:"
SPEAKERS = ("A", "B")
DEFAULT_SPLITS = ("train", "validation", "test")

_RECORD_KEYS = {"dialogue_id", "photo_id", "photo_url", "photo_description", "dialogue"}
_TURN_KEYS = {"user_id", "message", "share_photo"}


def _require(condition: bool, message: str):
    if not condition:
        raise SchemaError(message)


def _record_id(value, field: str) -> str:
    _require(isinstance(value, (str, int)) and not isinstance(value, bool),
             f"{field} must be a string or integer, got {value!r}")
    return str(value)


def parse_objects(description: str) -> list[str]:
    """Object list from a raw photo description, lowercased, deduplicated."""
    _require(isinstance(description, str) and description.startswith(OBJECT_PREFIX),
             f"photo_description must start with {OBJECT_PREFIX!r}")
    rest = description[len(OBJECT_PREFIX):]
    seen: dict[str, None] = {}
    for part in rest.split(","):
        name = part.strip().lower()
        if name:
            seen.setdefault(name)
    return list(seen)


def convert_record(record: dict) -> tuple[dict, dict] | None:
    """One raw record to (photo record, dialogue record), or None if the
    record holds no retrieval task."""
    _require(isinstance(record, dict), "raw records must be JSON objects")
    extra = set(record) - _RECORD_KEYS
    _require(not extra, f"unexpected raw fields {sorted(extra)}")
    missing = _RECORD_KEYS - set(record)
    _require(not missing, f"missing raw fields {sorted(missing)}")

    photo_id = _record_id(record["photo_id"], "photo_id")
    dialogue_id = _record_id(record["dialogue_id"], "dialogue_id")
    _require(isinstance(record["photo_url"], str), "photo_url must be a string")
    objects = parse_objects(record["photo_description"])

    raw_turns = record["dialogue"]
    _require(isinstance(raw_turns, list), "dialogue must be a list of turns")
    turns = []
    sharer = None
    for raw in raw_turns:
        _require(isinstance(raw, dict) and set(raw) == _TURN_KEYS,
                 "each turn needs exactly user_id, message, share_photo")
        _require(raw["user_id"] in (0, 1), f"user_id must be 0 or 1, got {raw['user_id']!r}")
        _require(isinstance(raw["message"], str), "message must be a string")
        _require(isinstance(raw["share_photo"], bool), "share_photo must be a boolean")
        speaker = SPEAKERS[raw["user_id"]]
        if raw["share_photo"]:
            sharer = speaker
            break
        if raw["message"].strip():
            turns.append({"speaker": speaker, "text": raw["message"]})
    if sharer is None or not turns:
        return None

    photo = {"kind": "photo", "id": photo_id,
             "image_ref": record["photo_url"], "objects": objects}
    dialogue = {"kind": "dialogue", "id": dialogue_id, "sharer": sharer,
                "turns": turns, "target_photo_id": photo_id}
    return photo, dialogue


def _load_split_records(raw_dir: Path, split: str) -> list[dict]:
    files = sorted(raw_dir.glob(f"{split}*.json"))
    _require(bool(files), f"no {split}*.json files under {raw_dir}")
    records: list[dict] = []
    for path in files:
        payload = json.loads(path.read_text(encoding="utf-8"))
        _require(isinstance(payload, list), f"{path.name} must hold a JSON array")
        records.extend(payload)
    _require(bool(records), f"split {split!r} holds no records")
    return records


def _write_jsonl(lines: Iterable[str], path: Path):
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def export_split(raw_dir: str | Path, split: str, out_path: str | Path) -> Path:
    """Convert one raw split into an engine corpus file."""
    records = _load_split_records(Path(raw_dir), split)
    photos: dict[str, dict] = {}
    dialogues: dict[str, dict] = {}
    for record in records:
        converted = convert_record(record)
        if converted is None:
            continue
        photo, dialogue = converted
        previous = photos.get(photo["id"])
        if previous is not None and previous != photo:
            raise SchemaError(f"photo {photo['id']!r} appears with conflicting metadata")
        photos[photo["id"]] = photo
        if dialogue["id"] in dialogues:
            raise SchemaError(f"duplicate dialogue_id {dialogue['id']!r}")
        dialogues[dialogue["id"]] = dialogue
    _require(bool(photos), f"split {split!r} produced no usable records")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(p, ensure_ascii=False) for p in photos.values()]
    lines += [json.dumps(d, ensure_ascii=False) for d in dialogues.values()]
    _write_jsonl(lines, out_path)
    return out_path


def export_photochat(
    raw_dir: str | Path,
    out_dir: str | Path,
    splits: Iterable[str] = DEFAULT_SPLITS,
) -> dict[str, Path]:
    """Convert every requested split; returns split name -> written file."""
    out_dir = Path(out_dir)
    written = {}
    for split in splits:
        written[split] = export_split(raw_dir, split, out_dir / f"{split}.jsonl")
    return written
