"""Encoders and a binary vector store.

Embeddings are float32 numpy arrays, L2-normalized, with a shared
dimensionality per store or encoder. Three encoder kinds cover the desk
workflow:

* MockEncoder: deterministic hash-based vectors, no model, no network.
  Texts sharing tokens land near each other, disjoint texts do not, which
  is enough signal for every pipeline test.
* StoreEncoder: looks vectors up in a precomputed store (the bridge's
  output) keyed by text hash or image id.
* RemoteEncoder: posts inputs to an embedding service.

Store files use a small binary layout: magic "EMBS", version u32, dim u32,
count u64, then per record a u32 key length, the UTF-8 key, and dim little
endian float32 values.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, StoreMissError, TransportError, ZeroVectorError

MAGIC = b"EMBS"
VERSION = 1
DEFAULT_TEXT_BUDGET = 4096

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def normalize(vector: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm. Raises ZeroVectorError on zero input."""
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVectorError("cannot normalize a zero or non-finite vector")
    return arr / norm


def truncate_text(text: str, budget: int = DEFAULT_TEXT_BUDGET) -> str:
    """Clip text to the character budget applied before hashing or encoding."""
    return text[:budget]


def text_key(text: str, budget: int = DEFAULT_TEXT_BUDGET) -> str:
    """Store key for a text: 'text:' plus the sha256 of its truncated UTF-8."""
    digest = hashlib.sha256(truncate_text(text, budget).encode("utf-8")).hexdigest()
    return f"text:{digest}"


def image_key(image_id: str) -> str:
    """Store key for an image: 'image:' plus the id."""
    return f"image:{image_id}"


# ---- binary store -------------------------------------------------------------


@dataclass
class EmbeddingStore:
    dim: int
    records: dict[str, np.ndarray] = field(default_factory=dict)

    def put(self, key: str, vector: np.ndarray) -> None:
        arr = np.asarray(vector, dtype=np.float32)
        if arr.shape != (self.dim,):
            raise FormatError(f"vector for {key!r} has shape {arr.shape}, expected ({self.dim},)")
        self.records[key] = arr

    def get(self, key: str) -> np.ndarray:
        try:
            return self.records[key]
        except KeyError:
            raise StoreMissError(f"store has no record for key {key!r}") from None


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Serialize a store. Vectors must be finite and match the store dim."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, store.dim, len(store.records)))
        for key, vector in store.records.items():
            arr = np.asarray(vector, dtype="<f4")
            if arr.shape != (store.dim,):
                raise FormatError(f"vector for {key!r} has shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise FormatError(f"vector for {key!r} has non-finite values")
            encoded = key.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(arr.tobytes())


def read_store(path: str | Path) -> EmbeddingStore:
    """Read a store file back. Raises FormatError on any structural damage."""
    data = Path(path).read_bytes()
    if len(data) < 20:
        raise FormatError("store file too short for a header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    version, dim, count = struct.unpack("<IIQ", data[4:20])
    if version != VERSION:
        raise FormatError(f"unsupported store version {version}")
    if dim < 1:
        raise FormatError("store dim must be at least 1")
    offset = 20
    records: dict[str, np.ndarray] = {}
    vec_bytes = dim * 4
    for _ in range(count):
        if offset + 4 > len(data):
            raise FormatError("truncated record header")
        (key_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + key_len + vec_bytes > len(data):
            raise FormatError("truncated record body")
        try:
            key = data[offset : offset + key_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("record key is not valid UTF-8") from exc
        offset += key_len
        if key in records:
            raise FormatError(f"duplicate key {key!r}")
        vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        records[key] = vector
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after {count} records")
    return EmbeddingStore(dim=dim, records=records)


# ---- encoders ------------------------------------------------------------------


class Encoder:
    """Common interface: batch text/image encoding returning float32 rows."""

    dim: int
    text_budget: int

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def encode_images(self, image_refs: list[str]) -> np.ndarray:
        raise NotImplementedError

    def encode_text(self, text: str) -> np.ndarray:
        return self.encode_texts([text])[0]

    def encode_image(self, image_ref: str) -> np.ndarray:
        return self.encode_images([image_ref])[0]

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "dim": self.dim, "text_budget": self.text_budget}


class MockEncoder(Encoder):
    """Deterministic bag-of-words encoder for tests and demos.

    Each token maps through a 64-bit blake2b hash and the global seed into
    a seeded generator that emits one unit vector; texts are mean-pooled
    token vectors, renormalized. The output is a pure function of
    (seed, dim, input) with no OS randomness, so runs reproduce bit for bit
    anywhere.
    """

    def __init__(self, dim: int = 32, seed: int = 0, text_budget: int = DEFAULT_TEXT_BUDGET):
        if dim < 2:
            raise ValueError("dim must be at least 2")
        self.dim = dim
        self.seed = seed
        self.text_budget = text_budget

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        token_hash = int.from_bytes(digest, "little")
        rng = np.random.default_rng((self.seed, token_hash))
        return normalize(rng.standard_normal(self.dim))

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            tokens = _TOKEN_RE.findall(truncate_text(text, self.text_budget).lower())
            if not tokens:
                tokens = [""]
            pooled = np.mean([self._token_vector(t) for t in tokens], axis=0)
            rows.append(normalize(pooled))
        return np.asarray(rows, dtype=np.float32).reshape(len(texts), self.dim)

    def encode_images(self, image_refs: list[str]) -> np.ndarray:
        rows = [self._token_vector(ref) for ref in image_refs]
        return np.asarray(rows, dtype=np.float32).reshape(len(image_refs), self.dim)

    def describe(self) -> dict:
        info = super().describe()
        info["seed"] = self.seed
        return info


class StoreEncoder(Encoder):
    """Serves precomputed vectors from an EmbeddingStore.

    Texts resolve through their truncated-hash key, images through their id.
    Vectors are renormalized on the way out so stores produced by external
    tools with slightly off norms still satisfy the unit-norm contract.
    """

    def __init__(self, store: EmbeddingStore, text_budget: int = DEFAULT_TEXT_BUDGET):
        self.store = store
        self.dim = store.dim
        self.text_budget = text_budget

    def _lookup(self, key: str) -> np.ndarray:
        return normalize(self.store.get(key)).astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = [self._lookup(text_key(t, self.text_budget)) for t in texts]
        return np.asarray(rows, dtype=np.float32).reshape(len(texts), self.dim)

    def encode_images(self, image_refs: list[str]) -> np.ndarray:
        rows = [self._lookup(image_key(r)) for r in image_refs]
        return np.asarray(rows, dtype=np.float32).reshape(len(image_refs), self.dim)


class RemoteEncoder(Encoder):
    """Calls an embedding service: POST {base_url}/embed {"inputs": [...]}.

    The service answers {"vectors": [[...], ...]} with one row per input.
    Failures and malformed payloads raise TransportError.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        text_budget: int = DEFAULT_TEXT_BUDGET,
        session=None,
    ):
        if session is None:
            import requests

            session = requests.Session()
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.text_budget = text_budget
        self.session = session
        self.dim = 0  # discovered from the first response

    def _post(self, inputs: list[str]) -> np.ndarray:
        import requests

        try:
            response = self.session.post(
                f"{self.base_url}/embed", json={"inputs": inputs}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding service unreachable: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"embedding service returned HTTP {response.status_code}")
        try:
            payload = response.json()
            vectors = payload["vectors"]
        except Exception as exc:
            raise TransportError("embedding service returned a malformed payload") from exc
        arr = np.asarray(vectors, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] != len(inputs):
            raise TransportError(f"expected {len(inputs)} vectors, got shape {arr.shape}")
        if self.dim == 0:
            if arr.shape[1] < 2:
                raise TransportError("embedding service returned vectors of dim < 2")
            self.dim = int(arr.shape[1])
        elif arr.shape[1] != self.dim:
            raise TransportError(f"vector dim changed from {self.dim} to {arr.shape[1]}")
        return np.asarray([normalize(row) for row in arr], dtype=np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, max(self.dim, 1)), dtype=np.float32)
        return self._post([truncate_text(t, self.text_budget) for t in texts])

    def encode_images(self, image_refs: list[str]) -> np.ndarray:
        if not image_refs:
            return np.zeros((0, max(self.dim, 1)), dtype=np.float32)
        return self._post(list(image_refs))

    def describe(self) -> dict:
        info = super().describe()
        info["base_url"] = self.base_url
        return info
