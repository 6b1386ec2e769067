"""Retrieval service validation, HTTP behavior, and completion caching."""

import json

import pytest
import requests

from photoseek import MockEncoder
from photoseek.corpus import Corpus
from photoseek.errors import ParseError, TransportError, ValidationError
from photoseek.llm import LlmClient, LlmEndpointConfig
from photoseek.scoring import FusionConfig
from photoseek.serve import RetrievalService, build_server, parse_dialogue_record


def _record(corpus, index=0, **extra):
    d = corpus.dialogues[index]
    rec = {
        "id": d.id,
        "sharer": d.sharer,
        "turns": [{"speaker": t.speaker, "text": t.text} for t in d.turns],
    }
    rec.update(extra)
    return rec


def _service(corpus, **kwargs):
    kwargs.setdefault("encoder", MockEncoder(dim=16))
    kwargs.setdefault("fusion", FusionConfig(1.0))
    return RetrievalService(corpus=corpus, **kwargs)


class TestParseDialogueRecord:
    def test_valid_record(self, tiny_corpus):
        rec = _record(tiny_corpus)
        dialogue = parse_dialogue_record(rec)
        assert dialogue.id == rec["id"]
        assert len(dialogue.turns) == len(rec["turns"])

    def test_id_defaults_and_kind_stripped(self, tiny_corpus):
        rec = _record(tiny_corpus, kind="dialogue")
        rec.pop("id")
        dialogue = parse_dialogue_record(rec)
        assert dialogue.id == "query"

    def test_non_dict_rejected(self):
        with pytest.raises(ParseError):
            parse_dialogue_record(["not", "a", "dict"])

    def test_bad_sharer_rejected(self, tiny_corpus):
        rec = _record(tiny_corpus)
        rec["sharer"] = "Z"
        with pytest.raises(ParseError):
            parse_dialogue_record(rec)


class TestRetrieve:
    def test_basic_ranking(self, tiny_corpus):
        service = _service(tiny_corpus)
        result = service.retrieve({"dialogue": _record(tiny_corpus), "k": 4})
        assert set(result) == {"photo_ids", "scores"}
        assert len(result["photo_ids"]) == 4
        assert result["scores"] == sorted(result["scores"], reverse=True)
        assert len(set(result["photo_ids"])) == 4

    def test_k_clipped_to_corpus(self, tiny_corpus):
        service = _service(tiny_corpus)
        result = service.retrieve({"dialogue": _record(tiny_corpus), "k": 999})
        assert len(result["photo_ids"]) == len(tiny_corpus.photos)

    def test_default_k(self, tiny_corpus):
        service = _service(tiny_corpus, default_k=2)
        result = service.retrieve({"dialogue": _record(tiny_corpus)})
        assert len(result["photo_ids"]) == 2

    @pytest.mark.parametrize("k", [0, -1, True, "5", 2.0])
    def test_bad_k_rejected(self, tiny_corpus, k):
        service = _service(tiny_corpus)
        with pytest.raises(ParseError, match="positive integer"):
            service.retrieve({"dialogue": _record(tiny_corpus), "k": k})

    def test_missing_dialogue_rejected(self, tiny_corpus):
        service = _service(tiny_corpus)
        with pytest.raises(ParseError):
            service.retrieve({"k": 1})

    def test_non_dict_body_rejected(self, tiny_corpus):
        service = _service(tiny_corpus)
        with pytest.raises(ParseError):
            service.retrieve([1, 2])

    def test_caption_variant_rejected(self, tiny_corpus):
        service = _service(tiny_corpus)
        body = {"dialogue": _record(tiny_corpus), "variant": "provided_caption"}
        with pytest.raises(ParseError, match="caption"):
            service.retrieve(body)

    def test_unknown_variant_rejected(self, tiny_corpus):
        service = _service(tiny_corpus)
        body = {"dialogue": _record(tiny_corpus), "variant": "haiku"}
        with pytest.raises(ParseError, match="unknown variant"):
            service.retrieve(body)

    def test_llm_variant_without_endpoint(self, tiny_corpus):
        service = _service(tiny_corpus)
        body = {"dialogue": _record(tiny_corpus), "variant": "summary"}
        with pytest.raises(ValidationError, match="no LLM endpoint"):
            service.retrieve(body)

    def test_fresh_instances_agree(self, tiny_corpus):
        body = {"dialogue": _record(tiny_corpus), "k": 5}
        first = _service(tiny_corpus).retrieve(body)
        second = _service(tiny_corpus).retrieve(body)
        assert first == second

    def test_matches_offline_scoring(self, tiny_corpus):
        from photoseek.descriptors import DescriptorVariant, generate_descriptor
        from photoseek.scoring import rank, score_all

        dialogue = tiny_corpus.dialogues[0]
        descriptor = generate_descriptor(dialogue, DescriptorVariant.DIALOGUE)
        candidates = Corpus(photos=tiny_corpus.photos, dialogues=[dialogue])
        matrix = score_all([descriptor], candidates, MockEncoder(dim=16))
        ranking = rank(matrix, FusionConfig(1.0))[0]

        service = _service(tiny_corpus)
        result = service.retrieve({"dialogue": _record(tiny_corpus), "k": 10})
        assert result["photo_ids"] == ranking.photo_ids[:10]
        assert result["scores"] == pytest.approx(ranking.scores[:10])


class TestCompletionCache:
    def test_repeat_request_reuses_completion(self, tiny_corpus, stub_llm):
        llm = LlmClient(LlmEndpointConfig(base_url=stub_llm.url, model="stub"))
        service = _service(tiny_corpus, llm=llm)
        body = {"dialogue": _record(tiny_corpus), "variant": "summary"}
        first = service.retrieve(body)
        calls_after_first = len(stub_llm.calls)
        second = service.retrieve(body)
        assert first == second
        assert len(stub_llm.calls) == calls_after_first == 1

    def test_different_dialogue_misses_cache(self, tiny_corpus, stub_llm):
        llm = LlmClient(LlmEndpointConfig(base_url=stub_llm.url, model="stub"))
        service = _service(tiny_corpus, llm=llm)
        service.retrieve({"dialogue": _record(tiny_corpus, 0), "variant": "summary"})
        service.retrieve({"dialogue": _record(tiny_corpus, 1), "variant": "summary"})
        assert len(stub_llm.calls) == 2


class TestHttp:
    @pytest.fixture
    def server(self, tiny_corpus):
        srv = build_server(_service(tiny_corpus), "127.0.0.1", 0)
        import threading

        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        host, port = srv.server_address[:2]
        yield f"http://{host}:{port}"
        srv.shutdown()
        srv.server_close()

    def test_retrieve_roundtrip(self, server, tiny_corpus):
        resp = requests.post(
            f"{server}/retrieve",
            json={"dialogue": _record(tiny_corpus), "k": 3},
            timeout=10,
        )
        assert resp.status_code == 200
        payload = resp.json()
        assert len(payload["photo_ids"]) == 3

    def test_unknown_path_is_404(self, server):
        resp = requests.post(f"{server}/nope", json={}, timeout=10)
        assert resp.status_code == 404

    def test_invalid_json_body_is_400(self, server):
        resp = requests.post(
            f"{server}/retrieve", data=b"{broken", timeout=10,
            headers={"Content-Type": "application/json"},
        )
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_validation_error_is_400(self, server, tiny_corpus):
        resp = requests.post(
            f"{server}/retrieve",
            json={"dialogue": _record(tiny_corpus), "k": 0},
            timeout=10,
        )
        assert resp.status_code == 400

    def test_upstream_failure_is_502(self, tiny_corpus):
        import threading

        llm = LlmClient(
            LlmEndpointConfig(
                base_url="http://127.0.0.1:1", model="m", timeout=1, max_retries=0
            )
        )
        srv = build_server(_service(tiny_corpus, llm=llm), "127.0.0.1", 0)
        thread = threading.Thread(target=srv.serve_forever, daemon=True)
        thread.start()
        host, port = srv.server_address[:2]
        try:
            resp = requests.post(
                f"http://{host}:{port}/retrieve",
                json={"dialogue": _record(tiny_corpus), "variant": "summary"},
                timeout=15,
            )
            assert resp.status_code == 502
        finally:
            srv.shutdown()
            srv.server_close()

    def test_identical_bytes_across_instances(self, tiny_corpus):
        import threading

        body = json.dumps({"dialogue": _record(tiny_corpus), "k": 5}).encode()
        seen = []
        for _ in range(2):
            srv = build_server(_service(tiny_corpus), "127.0.0.1", 0)
            thread = threading.Thread(target=srv.serve_forever, daemon=True)
            thread.start()
            host, port = srv.server_address[:2]
            try:
                resp = requests.post(
                    f"http://{host}:{port}/retrieve", data=body, timeout=10,
                    headers={"Content-Type": "application/json"},
                )
                seen.append(resp.content)
            finally:
                srv.shutdown()
                srv.server_close()
        assert seen[0] == seen[1]
