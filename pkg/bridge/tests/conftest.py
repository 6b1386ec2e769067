"""Shared fixtures: a tiny randomly initialized CLIP checkpoint, raw
PhotoChat-style records, and small image files."""

from __future__ import annotations

import json
import string

import numpy as np
import pytest


@pytest.fixture(scope="session")
def tiny_clip_dir(tmp_path_factory):
    """A complete CLIP checkpoint (model, tokenizer, image processor) with
    random weights and a character-level vocabulary, saved locally so the
    real loading path runs without any network or large download."""
    torch = pytest.importorskip("torch")
    from transformers import (
        CLIPConfig,
        CLIPImageProcessor,
        CLIPModel,
        CLIPTextConfig,
        CLIPTokenizer,
        CLIPVisionConfig,
    )

    out = tmp_path_factory.mktemp("tiny-clip")
    chars = list(string.ascii_lowercase + string.digits) + list(".,!?'-")
    vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
    for ch in chars:
        vocab.setdefault(ch, len(vocab))
        vocab.setdefault(ch + "</w>", len(vocab))
    (out / "vocab.json").write_text(json.dumps(vocab))
    (out / "merges.txt").write_text("#version: 0.2\n")
    CLIPTokenizer(str(out / "vocab.json"), str(out / "merges.txt")).save_pretrained(out)

    config = CLIPConfig(
        text_config=CLIPTextConfig(
            vocab_size=len(vocab), hidden_size=16, intermediate_size=32,
            num_hidden_layers=1, num_attention_heads=2,
            max_position_embeddings=32, projection_dim=8,
            bos_token_id=0, eos_token_id=1, pad_token_id=1,
        ),
        vision_config=CLIPVisionConfig(
            hidden_size=16, intermediate_size=32, num_hidden_layers=1,
            num_attention_heads=2, image_size=30, patch_size=15, projection_dim=8,
        ),
        projection_dim=8,
    )
    torch.manual_seed(0)
    CLIPModel(config).save_pretrained(out)
    CLIPImageProcessor(
        size={"shortest_edge": 30}, crop_size={"height": 30, "width": 30}
    ).save_pretrained(out)
    return out


def make_png(path, seed: int, size: int = 36):
    from PIL import Image

    pixels = np.random.default_rng(seed).integers(0, 255, (size, size, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(path)
    return path


@pytest.fixture
def image_dir(tmp_path):
    paths = {}
    for i in range(3):
        paths[f"img{i}"] = make_png(tmp_path / f"img{i}.png", seed=i)
    return tmp_path, paths


def raw_record(index: int, n_turns: int = 3, share_at: int | None = None,
               photo_id: str | None = None):
    """One raw PhotoChat-style record. The share event lands after
    ``share_at`` plain turns (defaults to all of them)."""
    share_at = n_turns if share_at is None else share_at
    turns = []
    for t in range(share_at):
        turns.append({
            "user_id": t % 2,
            "message": f"turn {t} of conversation {index}",
            "share_photo": False,
        })
    turns.append({"user_id": share_at % 2, "message": "", "share_photo": True})
    return {
        "dialogue_id": f"dlg{index}",
        "photo_id": photo_id or f"photo{index}",
        "photo_url": f"http://example.test/{photo_id or f'photo{index}'}.jpg",
        "photo_description": f"Objects in the photo: Item{index}a, item{index}b",
        "dialogue": turns,
    }


@pytest.fixture
def raw_dir(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "test.json").write_text(json.dumps([raw_record(i) for i in range(5)]))
    (raw / "train_00.json").write_text(json.dumps([raw_record(100 + i) for i in range(3)]))
    (raw / "train_01.json").write_text(json.dumps([raw_record(200 + i) for i in range(2)]))
    return raw
