"""HTTP endpoint that retrieves photos for a posted dialogue.

One route: POST /retrieve with a JSON body

    {"dialogue": {"turns": [...], "sharer": "A"}, "k": 5, "variant": "dialogue"}

answering {"photo_ids": [...], "scores": [...]} best first. Candidate
embeddings are computed once at startup; each request only encodes its
descriptor. LLM-backed variants reuse completions through an in-memory
cache keyed by the dialogue content, and concurrent LLM calls are bounded
by a semaphore so a burst of requests cannot stampede the endpoint.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .corpus import Corpus, Dialogue, render_object_list
from .corpus import _parse_dialogue  # shared record validation
from .descriptors import (
    DescriptorVariant,
    QuerySet,
    generate_descriptor,
)
from .embeddings import Encoder
from .errors import (
    LlmFormatError,
    ParseError,
    PhotoseekError,
    TransportError,
    ValidationError,
)
from .llm import LlmClient
from .scoring import FusionConfig, _adapter_matrices, _normalize_rows

MAX_CONCURRENT_LLM_CALLS = 4


def parse_dialogue_record(record: dict, default_id: str = "query") -> Dialogue:
    """Validate a bare dialogue JSON object (the corpus record, kind optional)."""
    if not isinstance(record, dict):
        raise ParseError("dialogue must be a JSON object")
    rec = dict(record)
    rec.setdefault("id", default_id)
    rec.pop("kind", None)
    return _parse_dialogue(rec, line_no=None)


@dataclass
class RetrievalService:
    corpus: Corpus
    encoder: Encoder
    fusion: FusionConfig
    adapters: object | None = None
    llm: LlmClient | None = None
    query_set: QuerySet | None = None
    default_k: int = 10

    def __post_init__(self):
        obj_raw = self.encoder.encode_texts(
            [render_object_list(p.objects) for p in self.corpus.photos]
        ).astype(np.float64)
        img_raw = self.encoder.encode_images(
            [p.image_ref for p in self.corpus.photos]
        ).astype(np.float64)
        dim = obj_raw.shape[1]
        self._a_desc, a_obj, a_img = _adapter_matrices(self.adapters, dim)
        self._obj = _normalize_rows(obj_raw @ a_obj.T)
        self._img = _normalize_rows(img_raw @ a_img.T)
        self._photo_ids = [p.id for p in self.corpus.photos]
        self._cache: dict[str, str] = {}
        self._cache_lock = threading.Lock()
        self._llm_slots = threading.Semaphore(MAX_CONCURRENT_LLM_CALLS)

    def _descriptor_text(self, dialogue, variant: DescriptorVariant) -> str:
        if variant == DescriptorVariant.DIALOGUE:
            return generate_descriptor(dialogue, variant).text
        if self.llm is None:
            raise ValidationError(f"server has no LLM endpoint for variant {variant.value!r}")
        fingerprint = hashlib.sha256(
            json.dumps(
                {
                    "turns": [[t.speaker, t.text] for t in dialogue.turns],
                    "sharer": dialogue.sharer,
                    "variant": variant.value,
                    "model": self.llm.config.model,
                },
                sort_keys=True,
            ).encode("utf-8")
        ).hexdigest()
        with self._cache_lock:
            cached = self._cache.get(fingerprint)
        if cached is not None:
            return cached
        with self._llm_slots:
            text = generate_descriptor(
                dialogue, variant, query_set=self.query_set, llm=self.llm
            ).text
        with self._cache_lock:
            self._cache[fingerprint] = text
        return text

    def retrieve(self, body: dict) -> dict:
        if not isinstance(body, dict):
            raise ParseError("request body must be a JSON object")
        dialogue = parse_dialogue_record(body.get("dialogue"))
        k = body.get("k", self.default_k)
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ParseError("k must be a positive integer")
        raw_variant = body.get("variant", DescriptorVariant.DIALOGUE.value)
        try:
            variant = DescriptorVariant(raw_variant)
        except ValueError:
            raise ParseError(f"unknown variant {raw_variant!r}") from None
        if variant == DescriptorVariant.PROVIDED_CAPTION:
            raise ParseError("the caption variant cannot be generated per request")

        text = self._descriptor_text(dialogue, variant)
        desc_raw = self.encoder.encode_text(text).astype(np.float64)
        desc_t = _normalize_rows((desc_raw @ self._a_desc.T)[None, :])[0]
        scene = np.clip(self._obj @ desc_t, -1.0, 1.0)
        vision = np.clip(self._img @ desc_t, -1.0, 1.0)
        fused = scene + self.fusion.vision_weight * vision
        order = np.argsort(-fused, kind="stable")[: min(k, len(self._photo_ids))]
        return {
            "photo_ids": [self._photo_ids[j] for j in order],
            "scores": [float(fused[j]) for j in order],
        }


class _Handler(BaseHTTPRequestHandler):
    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path != "/retrieve":
            self._send(404, {"error": "unknown path"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._send(400, {"error": "request body is not valid JSON"})
            return
        try:
            result = self.server.service.retrieve(body)
        except (TransportError,) as exc:
            self._send(502, {"error": str(exc)})
            return
        except (LlmFormatError,) as exc:
            self._send(502, {"error": f"descriptor generation failed: {exc}"})
            return
        except PhotoseekError as exc:
            self._send(400, {"error": str(exc)})
            return
        self._send(200, result)

    def log_message(self, format, *args):
        pass  # keep test output quiet


class RetrievalServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: RetrievalService):
        super().__init__(address, _Handler)
        self.service = service


def build_server(service: RetrievalService, host: str = "127.0.0.1", port: int = 0):
    """Bind a retrieval server; port 0 picks a free port."""
    return RetrievalServer((host, port), service)
