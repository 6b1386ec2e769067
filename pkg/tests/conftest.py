"""Shared fixtures: tiny corpora, stub HTTP services, a CLI runner.

The stub chat service answers deterministically from the prompt text alone,
so cache-less reruns produce identical descriptors and CLI artifacts can be
compared byte for byte. The stub embedding service wraps a MockEncoder
behind the wire protocol.
"""

from __future__ import annotations

import contextlib
import io
import json
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from photoseek import MockEncoder, save_corpus, synthetic
from photoseek.cli import main as cli_main

BULLET_RE = re.compile(r"^- (.+?): \{", re.MULTILINE)
OBJECT_RE = re.compile(r"thing\d+x\d+")


def stub_completion(prompt: str) -> str:
    """Deterministic stand-in for a chat model.

    Query prompts get a JSON object keyed by the bullet lines, answered with
    object tokens lifted from the dialogue context; free-form prompts get a
    sentence built from the same tokens. Wrapped in prose to exercise the
    JSON extractor the way real model output does.
    """
    objects = OBJECT_RE.findall(prompt) or ["nothing notable"]
    keys = BULLET_RE.findall(prompt)
    if keys:
        answers = {}
        for i, key in enumerate(keys):
            if key == "background scene":
                answers[key] = "a plain room"
            else:
                answers[key] = [objects[i % len(objects)], objects[0]]
        return "Sure! Here is the answer:\n" + json.dumps(answers) + "\nHope that helps."
    return f"The photo shows {', '.join(dict.fromkeys(objects))}."


@dataclass
class StubService:
    url: str
    server: ThreadingHTTPServer
    calls: list = field(default_factory=list)

    def close(self):
        self.server.shutdown()
        self.server.server_close()


def _start(handler_cls) -> StubService:
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler_cls)
    host, port = server.server_address[:2]
    service = StubService(url=f"http://{host}:{port}", server=server)
    handler_cls.service = service
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return service


class _ChatHandler(BaseHTTPRequestHandler):
    service: StubService

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.service.calls.append(body)
        if not self.path.endswith("/chat/completions"):
            self.send_error(404)
            return
        prompt = body["messages"][-1]["content"]
        payload = {"choices": [{"message": {"content": stub_completion(prompt)}}]}
        raw = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)


class _EmbedHandler(BaseHTTPRequestHandler):
    service: StubService
    encoder = MockEncoder(dim=24, seed=99)

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.service.calls.append(body)
        vectors = self.encoder.encode_texts(body["inputs"]).tolist()
        raw = json.dumps({"vectors": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)


@pytest.fixture
def stub_llm():
    service = _start(_ChatHandler)
    yield service
    service.close()


@pytest.fixture
def stub_embed():
    service = _start(_EmbedHandler)
    yield service
    service.close()


@pytest.fixture
def tiny_corpus():
    return synthetic.token_corpus(n_photos=10, seed=5)


@pytest.fixture
def corpus_file(tiny_corpus, tmp_path):
    path = tmp_path / "corpus.jsonl"
    save_corpus(tiny_corpus, path)
    return path


def run_cli(argv):
    """Run the CLI in-process, returning (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli_main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()
