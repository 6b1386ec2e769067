"""Visual descriptors: turning a dialogue into text that describes the photo.

A descriptor is the text actually embedded and matched against candidates.
Five variants exist:

* dialogue: the raw utterances concatenated, no model in the loop.
* summary: an LLM summary of what is known about the sharer.
* guessing: an LLM free-form guess at the shared photograph.
* queries: the LLM answers a fixed set of visual questions as JSON and the
  answers are rendered into declarative sentences, one per query.
* caption: an externally produced caption ingested as-is.

The query set defaults to five questions covering the subject, foreground
objects, background, events, and materials or attributes; "atmosphere or
mood" and "lighting" are available as optional extras.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .corpus import Dialogue
from .errors import (
    EmptyAnswerError,
    EmptyCompletionError,
    LlmFormatError,
    MissingFieldError,
    NoJsonObjectError,
    ParseError,
    UnsupportedVariantError,
    ValidationError,
)
from .llm import LlmClient

SHARE_MARKER = "(share a photo)"

LIST_ANSWER = "list"
SINGLE_ANSWER = "single"


class DescriptorVariant(str, Enum):
    DIALOGUE = "dialogue"
    SUMMARY = "summary"
    GUESSING = "guessing"
    QUERIES = "queries"
    PROVIDED_CAPTION = "caption"


@dataclass(frozen=True)
class Query:
    """One visual question.

    ``key`` is the JSON field the model must answer; ``template_noun`` is the
    noun phrase used when rendering the answer into a sentence (it defaults
    to the key); ``plural`` forces "are" in the rendered sentence even for a
    single answer, for keys whose head noun is plural.
    """

    key: str
    template_noun: str
    answer_kind: str = LIST_ANSWER
    plural: bool = False

    def __post_init__(self):
        if not self.key.strip():
            raise ValueError("query key must be non-empty")
        if self.answer_kind not in (LIST_ANSWER, SINGLE_ANSWER):
            raise ValueError(f"unknown answer kind {self.answer_kind!r}")


@dataclass(frozen=True)
class QuerySet:
    queries: tuple[Query, ...]

    def __post_init__(self):
        keys = [q.key.lower() for q in self.queries]
        if len(set(keys)) != len(keys):
            raise ValueError("query keys must be unique")
        if not keys:
            raise ValueError("query set must not be empty")

    def keys(self) -> list[str]:
        return [q.key for q in self.queries]

    def without(self, key: str) -> "QuerySet":
        if key not in self.keys():
            raise KeyError(f"query set has no key {key!r}")
        return QuerySet(tuple(q for q in self.queries if q.key != key))

    def plus(self, query: Query) -> "QuerySet":
        return QuerySet(self.queries + (query,))

    def fingerprint(self) -> str:
        """Short stable digest of the set, used to name per-set cache files."""
        payload = json.dumps(
            [[q.key, q.answer_kind] for q in self.queries], sort_keys=False
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def _query(key: str, kind: str = LIST_ANSWER, plural: bool = False) -> Query:
    return Query(key=key, template_noun=key, answer_kind=kind, plural=plural)


def default_query_set() -> QuerySet:
    """The five standard visual queries, in their canonical order."""
    return QuerySet(
        (
            _query("main subject"),
            _query("prominent objects in the foreground", plural=True),
            _query("background scene", SINGLE_ANSWER),
            _query("events", plural=True),
            _query("materials and attributes", plural=True),
        )
    )


def extra_queries() -> dict[str, Query]:
    """Optional additions studied alongside the default set."""
    return {
        "atmosphere or mood": _query("atmosphere or mood"),
        "lighting": _query("lighting", SINGLE_ANSWER),
    }


@dataclass
class Descriptor:
    dialogue_id: str
    variant: DescriptorVariant
    text: str
    answers: dict[str, list[str]] | None = None
    llm_model: str = ""
    raw_response: str = ""


# ---- prompts -------------------------------------------------------------------


def render_dialogue_context(dialogue: Dialogue) -> str:
    """Speaker-tagged turns followed by the share marker line."""
    lines = [f"{turn.speaker}: {turn.text}" for turn in dialogue.turns]
    lines.append(f"{dialogue.sharer}: {SHARE_MARKER}")
    return "\n".join(lines)


def _query_bullet(query: Query) -> str:
    if query.answer_kind == SINGLE_ANSWER:
        return f"- {query.key}: {{one {query.key}}}"
    return f"- {query.key}: {{simply list the answer by ','}}"


def build_prompt(
    dialogue: Dialogue,
    variant: DescriptorVariant,
    query_set: QuerySet | None = None,
) -> str:
    """Render the instruction prompt for an LLM-backed variant."""
    context = render_dialogue_context(dialogue)
    lead = f"Please read the following dialogue context:\n{context}\n\n"
    sharer = dialogue.sharer
    if variant == DescriptorVariant.SUMMARY:
        return (
            lead
            + "Based on the dialogue context, please summarize the information "
            + f"of speaker {sharer}.\n\nAnswers:"
        )
    if variant == DescriptorVariant.GUESSING:
        return (
            lead
            + "Based on the dialogue context, please describe the photograph "
            + f"shared by speaker {sharer}.\n\nAnswers:"
        )
    if variant == DescriptorVariant.QUERIES:
        qs = query_set or default_query_set()
        bullets = "\n".join(_query_bullet(q) for q in qs.queries)
        return (
            lead
            + "Based on the dialogue context, please describe the photograph "
            + f"shared by speaker {sharer}.\n"
            + "List the answer in JSON format.\n"
            + bullets
            + "\n\nAnswers:"
        )
    raise UnsupportedVariantError(f"variant {variant.value!r} takes no prompt")


# ---- parsing and rendering -------------------------------------------------------


def _first_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    start = raw.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            start = raw.find("{", start + 1)
            continue
        if isinstance(obj, dict):
            return obj
        start = raw.find("{", start + 1)
    raise NoJsonObjectError("no JSON object found in the completion")


def _coerce_answer(query: Query, value) -> list[str]:
    if isinstance(value, str):
        if query.answer_kind == SINGLE_ANSWER:
            items = [value.strip()] if value.strip() else []
        else:
            items = [part.strip() for part in value.split(",") if part.strip()]
    elif isinstance(value, bool) or isinstance(value, (int, float)):
        items = [str(value)]
    elif isinstance(value, list):
        items = []
        for element in value:
            if isinstance(element, (str, int, float, bool)):
                text = str(element).strip()
                if text:
                    items.append(text)
            else:
                raise LlmFormatError(
                    f"answer list for {query.key!r} holds an unsupported element"
                )
        if query.answer_kind == SINGLE_ANSWER and len(items) > 1:
            items = [", ".join(items)]
    else:
        raise LlmFormatError(f"answer for {query.key!r} has an unsupported type")
    if not items:
        raise EmptyAnswerError(query.key)
    return items


def parse_query_answers(raw: str, query_set: QuerySet) -> dict[str, list[str]]:
    """Extract the first JSON object from a completion and map it to answers.

    Keys match case-insensitively after trimming. Every query in the set
    must resolve: a missing key raises MissingFieldError, an empty value
    raises EmptyAnswerError. String values for list queries are split on
    commas; JSON arrays are taken element-wise.
    """
    obj = _first_json_object(raw)
    normalized = {}
    for key, value in obj.items():
        if isinstance(key, str):
            normalized.setdefault(key.strip().lower(), value)
    answers: dict[str, list[str]] = {}
    for query in query_set.queries:
        if query.key.lower() not in normalized:
            raise MissingFieldError(query.key)
        answers[query.key] = _coerce_answer(query, normalized[query.key.lower()])
    return answers


def render_descriptor(answers: dict[str, list[str]], query_set: QuerySet) -> str:
    """Turn parsed answers into one declarative sentence per query.

    Sentences follow "The {noun} of the photo {is|are} {answers}." with
    answers comma-joined. "are" is used when the answer list has more than
    one element or the query's noun is plural.
    """
    sentences = []
    for query in query_set.queries:
        if query.key not in answers:
            raise MissingFieldError(query.key)
        values = answers[query.key]
        if not values:
            raise EmptyAnswerError(query.key)
        verb = "are" if (len(values) > 1 or query.plural) else "is"
        sentences.append(f"The {query.template_noun} of the photo {verb} {', '.join(values)}.")
    return " ".join(sentences)


# ---- generation ------------------------------------------------------------------


def generate_descriptor(
    dialogue: Dialogue,
    variant: DescriptorVariant,
    query_set: QuerySet | None = None,
    llm: LlmClient | None = None,
) -> Descriptor:
    """Produce the descriptor for one dialogue.

    The dialogue variant concatenates turn texts and never touches the
    network. LLM variants need a client; the caption variant is ingested
    with the corpus rather than generated and is rejected here.
    """
    if variant == DescriptorVariant.DIALOGUE:
        text = " ".join(turn.text for turn in dialogue.turns)
        return Descriptor(dialogue_id=dialogue.id, variant=variant, text=text)
    if variant == DescriptorVariant.PROVIDED_CAPTION:
        raise UnsupportedVariantError("captions are ingested with the corpus, not generated")
    if llm is None:
        raise ValueError(f"variant {variant.value!r} needs an LLM client")
    prompt = build_prompt(dialogue, variant, query_set)
    raw = llm.complete(prompt)
    if variant == DescriptorVariant.QUERIES:
        qs = query_set or default_query_set()
        answers = parse_query_answers(raw, qs)
        text = render_descriptor(answers, qs)
        return Descriptor(
            dialogue_id=dialogue.id,
            variant=variant,
            text=text,
            answers=answers,
            llm_model=llm.config.model,
            raw_response=raw,
        )
    if not raw.strip():
        raise EmptyCompletionError(f"empty completion for dialogue {dialogue.id!r}")
    return Descriptor(
        dialogue_id=dialogue.id,
        variant=variant,
        text=raw,
        llm_model=llm.config.model,
        raw_response=raw,
    )


# ---- cache -----------------------------------------------------------------------


def cache_key(dialogue_id: str, variant: DescriptorVariant, model: str) -> tuple:
    return (dialogue_id, variant.value, model)


def load_descriptor_cache(path: str | Path) -> dict[tuple, Descriptor]:
    """Read a descriptor cache JSONL. A missing file is an empty cache."""
    p = Path(path)
    if not p.exists():
        return {}
    cache: dict[tuple, Descriptor] = {}
    with open(p, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            try:
                descriptor = Descriptor(
                    dialogue_id=record["dialogue_id"],
                    variant=DescriptorVariant(record["variant"]),
                    text=record["text"],
                    answers=record.get("answers"),
                    llm_model=record.get("llm_model", ""),
                    raw_response=record.get("raw_response", ""),
                )
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad descriptor record ({exc})", line_no) from exc
            if not descriptor.text:
                raise ParseError("descriptor text must be non-empty", line_no)
            key = cache_key(descriptor.dialogue_id, descriptor.variant, descriptor.llm_model)
            cache[key] = descriptor
    return cache


def append_descriptor(path: str | Path, descriptor: Descriptor) -> None:
    record = {
        "dialogue_id": descriptor.dialogue_id,
        "variant": descriptor.variant.value,
        "text": descriptor.text,
        "llm_model": descriptor.llm_model,
        "raw_response": descriptor.raw_response,
    }
    if descriptor.answers is not None:
        record["answers"] = descriptor.answers
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def generate_with_cache(
    dialogues: list[Dialogue],
    variant: DescriptorVariant,
    cache_path: str | Path,
    query_set: QuerySet | None = None,
    llm: LlmClient | None = None,
) -> list[Descriptor]:
    """Generate descriptors for many dialogues, reusing and extending a cache.

    Cache hits make no LLM calls, so a warm rerun is pure file IO and yields
    the same descriptors in the same order.
    """
    model = llm.config.model if llm is not None else ""
    cache = load_descriptor_cache(cache_path)
    out = []
    for dialogue in dialogues:
        key = cache_key(dialogue.id, variant, model)
        hit = cache.get(key)
        if hit is None:
            hit = generate_descriptor(dialogue, variant, query_set=query_set, llm=llm)
            append_descriptor(cache_path, hit)
            cache[key] = hit
        out.append(hit)
    return out


def select_descriptors(
    cache: dict[tuple, Descriptor],
    dialogues: list[Dialogue],
    variant: DescriptorVariant,
    model: str | None = None,
) -> list[Descriptor]:
    """Pick one cached descriptor per dialogue for a variant.

    With ``model`` given the match is exact; otherwise the variant must
    resolve to exactly one model per dialogue.
    """
    out = []
    for dialogue in dialogues:
        matches = [
            d
            for (did, var, mod), d in cache.items()
            if did == dialogue.id
            and var == variant.value
            and (model is None or mod == model)
        ]
        if not matches:
            raise ParseError(
                f"cache has no {variant.value!r} descriptor for dialogue {dialogue.id!r}"
            )
        if len(matches) > 1:
            raise ParseError(
                f"cache holds {len(matches)} {variant.value!r} descriptors for "
                f"dialogue {dialogue.id!r}; pass a model to disambiguate"
            )
        out.append(matches[0])
    return out


def descriptors_for_variant(
    corpus_dialogues: list[Dialogue],
    variant: DescriptorVariant,
    provided: dict | None = None,
) -> list[Descriptor]:
    """Resolve caption descriptors from a corpus's provided map."""
    if variant != DescriptorVariant.PROVIDED_CAPTION:
        raise UnsupportedVariantError("only the caption variant resolves from provided data")
    provided = provided or {}
    out = []
    for dialogue in corpus_dialogues:
        descriptor = provided.get(dialogue.id)
        if descriptor is None:
            raise ValidationError(f"no provided caption for dialogue {dialogue.id!r}")
        out.append(descriptor)
    return out
