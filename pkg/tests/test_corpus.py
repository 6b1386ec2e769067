"""Corpus parsing, serialization, and object-list perturbation."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photoseek import (
    Corpus,
    Dialogue,
    PhotoCandidate,
    Turn,
    load_corpus,
    perturb_objects,
    save_corpus,
)
from photoseek.corpus import (
    affected_count,
    attach_provided_descriptors,
    render_object_list,
)
from photoseek.errors import EmptyVocabularyError, ParseError, ValidationError


def write_lines(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def photo(pid="p1", objects=("dog", "ball")):
    return {"kind": "photo", "id": pid, "image_ref": f"img/{pid}.jpg", "objects": list(objects)}


def dialogue(did="d1", target="p1"):
    record = {
        "kind": "dialogue",
        "id": did,
        "turns": [{"speaker": "A", "text": "look at this"}],
        "sharer": "A",
    }
    if target is not None:
        record["target_photo_id"] = target
    return record


class TestLoad:
    def test_minimal_corpus(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [photo(), dialogue()])
        corpus = load_corpus(path)
        assert [p.id for p in corpus.photos] == ["p1"]
        assert corpus.dialogues[0].target_photo_id == "p1"
        assert corpus.dialogues[0].turns[0].speaker == "A"

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(photo()) + "\n\n   \n" + json.dumps(dialogue()) + "\n")
        corpus = load_corpus(path)
        assert len(corpus.dialogues) == 1

    def test_directory_with_split(self, tmp_path):
        write_lines(tmp_path / "test.jsonl", [photo()])
        corpus = load_corpus(tmp_path, split="test")
        assert len(corpus.photos) == 1
        with pytest.raises(ValidationError, match="pass split"):
            load_corpus(tmp_path)

    def test_objects_lowercased(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [photo(objects=["Dog", "BALL"])])
        assert load_corpus(path).photos[0].objects == ["dog", "ball"]

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(photo()) + "\n{oops\n")
        with pytest.raises(ParseError, match="line 2"):
            load_corpus(path)

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [{"kind": "video", "id": "v1"}])
        with pytest.raises(ParseError, match="unknown record kind"):
            load_corpus(path)

    @pytest.mark.parametrize("mutate", [
        lambda r: r.pop("image_ref"),
        lambda r: r.update(extra=1),
        lambda r: r.update(objects="dog"),
        lambda r: r.update(id=7),
    ])
    def test_bad_photo_shapes(self, tmp_path, mutate):
        record = photo()
        mutate(record)
        path = tmp_path / "c.jsonl"
        write_lines(path, [record])
        with pytest.raises((ParseError, ValidationError)):
            load_corpus(path)

    def test_duplicate_objects_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [photo(objects=["dog", "Dog"])])
        with pytest.raises(ValidationError, match="duplicate"):
            load_corpus(path)

    @pytest.mark.parametrize("mutate", [
        lambda r: r.update(sharer="C"),
        lambda r: r.update(turns=[]),
        lambda r: r.update(turns=[{"speaker": "A", "text": "   "}]),
        lambda r: r.update(turns=[{"speaker": "Q", "text": "hi"}]),
        lambda r: r.update(turns=[{"speaker": "A", "text": "hi", "mood": "up"}]),
        lambda r: r.pop("sharer"),
    ])
    def test_bad_dialogue_shapes(self, tmp_path, mutate):
        record = dialogue()
        mutate(record)
        path = tmp_path / "c.jsonl"
        write_lines(path, [photo(), record])
        with pytest.raises((ParseError, ValidationError)):
            load_corpus(path)

    def test_duplicate_ids_and_dangling_target(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [photo(), photo()])
        with pytest.raises(ValidationError, match="duplicate photo id"):
            load_corpus(path)
        write_lines(path, [photo(), dialogue(), dialogue()])
        with pytest.raises(ValidationError, match="duplicate dialogue id"):
            load_corpus(path)
        write_lines(path, [photo(), dialogue(target="p9")])
        with pytest.raises(ValidationError, match="unknown photo"):
            load_corpus(path)

    def test_no_photos(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [dialogue(target=None)])
        with pytest.raises(ValidationError, match="no photos"):
            load_corpus(path)

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_corpus(tmp_path / "absent.jsonl")


class TestRoundTrip:
    def test_save_then_load(self, tiny_corpus, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(tiny_corpus, path)
        again = load_corpus(path)
        assert again.photos == tiny_corpus.photos
        assert again.dialogues == tiny_corpus.dialogues

    def test_null_target_omitted(self, tmp_path):
        corpus = Corpus(
            photos=[PhotoCandidate("p1", "img", ["a"])],
            dialogues=[Dialogue("d1", [Turn("A", "hi")], "A", None)],
        )
        path = tmp_path / "c.jsonl"
        save_corpus(corpus, path)
        lines = path.read_text().splitlines()
        assert "target_photo_id" not in lines[1]
        assert load_corpus(path).dialogues[0].target_photo_id is None


ids = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Nd")), min_size=1, max_size=8
)
texts = st.text(min_size=1, max_size=30).filter(lambda s: s.strip())
objects = st.lists(
    st.text(
        alphabet=st.characters(whitelist_categories=("Ll", "Nd"), whitelist_characters=" "),
        min_size=1,
        max_size=12,
    ).filter(lambda s: s.strip() and s == s.lower()),
    min_size=0,
    max_size=5,
    unique=True,
)


@st.composite
def corpora(draw):
    photo_ids = draw(st.lists(ids, min_size=1, max_size=4, unique=True))
    photos = [
        PhotoCandidate(pid, f"ref/{pid}", draw(objects)) for pid in photo_ids
    ]
    dialogue_ids = draw(st.lists(ids, min_size=0, max_size=4, unique=True))
    dialogues = []
    for did in dialogue_ids:
        turns = [
            Turn(draw(st.sampled_from(["A", "B"])), draw(texts))
            for _ in range(draw(st.integers(1, 3)))
        ]
        target = draw(st.one_of(st.none(), st.sampled_from(photo_ids)))
        dialogues.append(Dialogue(did, turns, draw(st.sampled_from(["A", "B"])), target))
    return Corpus(photos=photos, dialogues=dialogues)


class TestRoundTripProperty:
    @settings(max_examples=60, deadline=None)
    @given(corpus=corpora())
    def test_jsonl_round_trip_is_exact(self, corpus, tmp_path_factory):
        path = tmp_path_factory.mktemp("rt") / "c.jsonl"
        save_corpus(corpus, path)
        again = load_corpus(path)
        assert again.photos == corpus.photos
        assert again.dialogues == corpus.dialogues
        save_corpus(again, path.with_suffix(".2.jsonl"))
        assert path.read_bytes() == path.with_suffix(".2.jsonl").read_bytes()


class TestProvidedDescriptors:
    def test_attach(self, tiny_corpus):
        class Desc:
            def __init__(self, did, text):
                self.dialogue_id = did
                self.text = text

        did = tiny_corpus.dialogues[0].id
        out = attach_provided_descriptors(tiny_corpus, [Desc(did, "a dog")])
        assert out.provided_descriptors[did].text == "a dog"
        assert tiny_corpus.provided_descriptors == {}
        with pytest.raises(ValidationError, match="unknown dialogue"):
            attach_provided_descriptors(tiny_corpus, [Desc("nope", "x")])


class TestRendering:
    def test_render_object_list(self):
        assert render_object_list(["a", "b", "c"]) == "a, b, c"
        assert render_object_list([]) == ""


class TestAffectedCount:
    def test_half_rounds_up(self):
        assert affected_count(0.25, 6) == 2
        assert affected_count(0.25, 10) == 3
        assert affected_count(0.5, 5) == 3

    def test_extremes(self):
        assert affected_count(0.0, 9) == 0
        assert affected_count(1.0, 9) == 9
        assert affected_count(0.35, 0) == 0


class TestPerturb:
    def test_rate_zero_is_identity(self, tiny_corpus):
        out = perturb_objects(tiny_corpus, 0.0, "both", seed=3)
        assert out.photos == tiny_corpus.photos

    def test_rate_one_missing_empties(self, tiny_corpus):
        out = perturb_objects(tiny_corpus, 1.0, "missing", seed=0)
        assert all(p.objects == [] for p in out.photos)

    def test_counts_match_rule(self, tiny_corpus):
        for rate in (0.15, 0.25, 0.35):
            out = perturb_objects(tiny_corpus, rate, "missing", seed=1)
            for before, after in zip(tiny_corpus.photos, out.photos):
                k = affected_count(rate, len(before.objects))
                assert len(after.objects) == len(before.objects) - k

    def test_incorrect_preserves_length_and_changes_k(self, tiny_corpus):
        rate = 0.5
        out = perturb_objects(tiny_corpus, rate, "incorrect", seed=2)
        for before, after in zip(tiny_corpus.photos, out.photos):
            assert len(after.objects) == len(before.objects)
            changed = sum(a != b for a, b in zip(before.objects, after.objects))
            assert changed == affected_count(rate, len(before.objects))

    def test_replacements_avoid_duplicates(self, tiny_corpus):
        out = perturb_objects(tiny_corpus, 1.0, "incorrect", seed=4)
        for p in out.photos:
            assert len(set(p.objects)) == len(p.objects)

    def test_kept_objects_preserve_order(self, tiny_corpus):
        out = perturb_objects(tiny_corpus, 0.5, "missing", seed=7)
        for before, after in zip(tiny_corpus.photos, out.photos):
            kept = [o for o in before.objects if o in set(after.objects)]
            assert kept == after.objects

    def test_deterministic_per_seed(self, tiny_corpus):
        a = perturb_objects(tiny_corpus, 0.35, "both", seed=11)
        b = perturb_objects(tiny_corpus, 0.35, "both", seed=11)
        c = perturb_objects(tiny_corpus, 0.35, "both", seed=12)
        assert a.photos == b.photos
        assert a.photos != c.photos

    def test_original_untouched(self, tiny_corpus):
        snapshot = [list(p.objects) for p in tiny_corpus.photos]
        perturb_objects(tiny_corpus, 1.0, "both", seed=0)
        assert [list(p.objects) for p in tiny_corpus.photos] == snapshot

    def test_dialogues_pass_through(self, tiny_corpus):
        out = perturb_objects(tiny_corpus, 0.5, "missing", seed=0)
        assert out.dialogues == tiny_corpus.dialogues

    def test_external_vocabulary_lowercased(self, tiny_corpus):
        out = perturb_objects(
            tiny_corpus, 0.5, "incorrect", seed=0, vocabulary=["Lamp", "VASE", "rug"]
        )
        allowed = {"lamp", "vase", "rug"}
        changed = 0
        for before, after in zip(tiny_corpus.photos, out.photos):
            for b, a in zip(before.objects, after.objects):
                if a != b:
                    changed += 1
                    assert a in allowed
        assert changed > 0

    def test_bad_arguments(self, tiny_corpus):
        with pytest.raises(ValueError):
            perturb_objects(tiny_corpus, -0.1, "missing", seed=0)
        with pytest.raises(ValueError):
            perturb_objects(tiny_corpus, 1.1, "missing", seed=0)
        with pytest.raises(ValueError):
            perturb_objects(tiny_corpus, 0.5, "scramble", seed=0)

    def test_empty_vocabulary(self):
        corpus = Corpus(
            photos=[PhotoCandidate("p1", "r", ["only"])],
            dialogues=[],
        )
        with pytest.raises(EmptyVocabularyError):
            perturb_objects(corpus, 1.0, "incorrect", seed=0)
