"""One command per export.

    bridge-export-texts      --model SPEC --input texts.jsonl --output store.embs
    bridge-export-images     --model SPEC --input images.jsonl --output store.embs
    bridge-export-photochat  --input raw_dir --output corpus_dir [--splits a,b]

Text manifests are JSONL objects with a "text" field; image manifests are
JSONL objects with "id" and "path" fields, relative paths resolved against
the manifest's directory. Model specs are either "dummy:DIM[:SEED]" or a
local checkpoint directory. Exit status 0 on success, 1 on any failure,
2 on bad arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import BridgeError
from .exports import BridgeJob, export_image_embeddings, export_text_embeddings
from .photochat import DEFAULT_SPLITS, export_photochat


def _read_manifest(path: str) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeError(f"{path}:{line_no}: not valid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise BridgeError(f"{path}:{line_no}: manifest lines must be JSON objects")
            entries.append(record)
    return entries


def _field(record: dict, key: str, path: str) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise BridgeError(f"{path}: manifest entries need a string {key!r} field")
    return value


def _embed_parser(prog: str, description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=prog, description=description)
    parser.add_argument("--model", required=True, help="dummy:DIM[:SEED] or a checkpoint dir")
    parser.add_argument("--input", required=True, help="JSONL manifest")
    parser.add_argument("--output", required=True, help="store file to write")
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def _run(fn) -> int:
    try:
        message = fn()
    except (BridgeError, OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


def main_texts(argv: list[str] | None = None) -> int:
    args = _embed_parser("bridge-export-texts", "embed a text manifest").parse_args(argv)

    def job():
        texts = [_field(r, "text", args.input) for r in _read_manifest(args.input)]
        path = export_text_embeddings(
            BridgeJob(args.model, tuple(texts), Path(args.output), args.batch_size)
        )
        return f"embedded {len(set(texts))} unique texts into {path}"

    return _run(job)


def main_images(argv: list[str] | None = None) -> int:
    args = _embed_parser("bridge-export-images", "embed an image manifest").parse_args(argv)

    def job():
        base = Path(args.input).parent
        entries = []
        for record in _read_manifest(args.input):
            image_id = _field(record, "id", args.input)
            raw_path = Path(_field(record, "path", args.input))
            entries.append((image_id, raw_path if raw_path.is_absolute() else base / raw_path))
        path = export_image_embeddings(
            BridgeJob(args.model, tuple(entries), Path(args.output), args.batch_size)
        )
        return f"embedded {len(entries)} images into {path}"

    return _run(job)


def main_photochat(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bridge-export-photochat",
        description="convert a raw PhotoChat release into engine corpus files",
    )
    parser.add_argument("--input", required=True, help="raw dataset directory")
    parser.add_argument("--output", required=True, help="directory for {split}.jsonl files")
    parser.add_argument("--splits", default=",".join(DEFAULT_SPLITS),
                        help="comma-separated split names")
    args = parser.parse_args(argv)

    def job():
        splits = [s.strip() for s in args.splits.split(",") if s.strip()]
        written = export_photochat(args.input, args.output, splits)
        parts = ", ".join(f"{split} -> {path}" for split, path in written.items())
        return f"wrote {parts}"

    return _run(job)
