"""Command line entry points.

Verbs mirror the library: generate descriptors, embed a corpus, retrieve
for one dialogue, train adapters, evaluate, sweep the fusion weight,
ablate queries, run the noise sensitivity study, ensemble variants, and
serve retrieval over HTTP.

Options resolve with flag > config file > default precedence; the config
file is flat ``key = value`` lines whose keys match flag names. Every
artifact-writing verb drops a ``<artifact>.config.json`` sidecar capturing
the resolved options, and identical inputs always reproduce identical
bytes. Exit codes: 0 success, 2 usage, 3 data, 4 upstream service.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import Corpus, load_corpus, render_object_list
from .descriptors import (
    DescriptorVariant,
    default_query_set,
    extra_queries,
    generate_descriptor,
    generate_with_cache,
    load_descriptor_cache,
    select_descriptors,
)
from .embeddings import (
    DEFAULT_TEXT_BUDGET,
    EmbeddingStore,
    MockEncoder,
    RemoteEncoder,
    StoreEncoder,
    image_key,
    read_store,
    text_key,
    write_store,
)
from .errors import (
    EmptyVocabularyError,
    FormatError,
    ParseError,
    StoreMissError,
    TransportError,
    UsageError,
    ValidationError,
    ZeroVectorError,
)
from .errors import EmptyCompletionError, LlmFormatError
from .evaluation import (
    DEFAULT_LAMBDA_GRID,
    DEFAULT_MODES,
    DEFAULT_RATES,
    ablate_queries,
    evaluate,
    recall_at_k,
    sensitivity,
    sweep_lambda,
    target_ranks,
    write_report,
)
from .llm import LlmClient, LlmEndpointConfig
from .scoring import FusionConfig, ensemble, rank, score_all
from .serve import RetrievalService, build_server, parse_dialogue_record
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_UPSTREAM = 4

_UPSTREAM_ERRORS = (TransportError, LlmFormatError, EmptyCompletionError)
_DATA_ERRORS = (
    ParseError,
    ValidationError,
    FormatError,
    EmptyVocabularyError,
    StoreMissError,
    ZeroVectorError,
    OSError,
)


@dataclass
class Command:
    verb: str
    options: dict


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _variant(text: str) -> DescriptorVariant:
    try:
        return DescriptorVariant(text)
    except ValueError:
        choices = ", ".join(v.value for v in DescriptorVariant)
        raise argparse.ArgumentTypeError(f"unknown variant {text!r} (choices: {choices})")


# ---- parser construction -----------------------------------------------------


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")


def _add_encoder_flags(parser):
    parser.add_argument(
        "--encoder", choices=["mock", "store", "remote"], default="mock",
        help="embedding source",
    )
    parser.add_argument("--dim", type=int, default=32, help="mock encoder dimensionality")
    parser.add_argument("--encoder-seed", type=int, default=0, help="mock encoder seed")
    parser.add_argument("--store", help="embedding store file for --encoder store")
    parser.add_argument(
        "--embed-url", default=None, help="embedding service URL for --encoder remote"
    )
    parser.add_argument(
        "--text-budget", type=int, default=DEFAULT_TEXT_BUDGET,
        help="character budget applied to texts before encoding",
    )


def _add_llm_flags(parser):
    parser.add_argument("--llm-url", default=None, help="chat endpoint base URL")
    parser.add_argument("--api-key", default=None, help="bearer token for the chat endpoint")
    parser.add_argument("--model", default=None, help="chat model name")
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--max-retries", type=int, default=3)


def _add_query_flags(parser):
    parser.add_argument(
        "--drop-query", action="append", default=[], metavar="KEY",
        help="remove a query from the default set (repeatable)",
    )
    parser.add_argument(
        "--add-query", action="append", default=[], metavar="KEY",
        help="add an optional query (repeatable)",
    )


def _add_fusion_flag(parser):
    parser.add_argument(
        "--lambda", dest="vision_weight", type=float, default=1.0,
        help="weight of the vision score in the fusion",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="photoseek", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)

    p = subparsers.add_parser("generate",
                              help="generate descriptors into a cache file")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--variant", type=_variant, default=DescriptorVariant.DIALOGUE)
    p.add_argument("--out", required=True, help="descriptor cache JSONL to write")
    _add_llm_flags(p)
    _add_query_flags(p)

    p = subparsers.add_parser("embed",
                              help="embed corpus texts and images into a store")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--descriptors", action="append", default=[],
                   help="descriptor cache whose texts should also be embedded (repeatable)")
    p.add_argument("--out", required=True, help="store file to write")
    _add_encoder_flags(p)

    p = subparsers.add_parser("retrieve",
                              help="rank photos for one dialogue")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--dialogue", required=True, help="dialogue JSON file, or - for stdin")
    p.add_argument("--variant", type=_variant, default=DescriptorVariant.DIALOGUE)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--cache", default=None, help="descriptor cache for LLM reuse")
    p.add_argument("--out", default=None, help="also write the result JSON here")
    _add_encoder_flags(p)
    _add_llm_flags(p)
    _add_query_flags(p)
    _add_fusion_flag(p)

    p = subparsers.add_parser("train", help="fit adapters")
    _add_common(p)
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--val-corpus", required=True)
    p.add_argument("--descriptors", required=True, help="train-split descriptor cache")
    p.add_argument("--val-descriptors", required=True, help="validation descriptor cache")
    p.add_argument("--variant", type=_variant, default=DescriptorVariant.DIALOGUE)
    p.add_argument("--model", default=None, help="cache model to select")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=56)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-tau", type=float, default=0.07)
    p.add_argument("--symmetric", action="store_true",
                   help="also contrast candidates against descriptors")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    _add_encoder_flags(p)
    _add_fusion_flag(p)

    p = subparsers.add_parser("evaluate", help="recall on a split")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--variant", type=_variant, default=DescriptorVariant.DIALOGUE)
    p.add_argument("--model", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--out", required=True, help="report JSON to write")
    p.add_argument("--csv", default=None, help="also export rows as CSV")
    _add_encoder_flags(p)
    _add_fusion_flag(p)

    p = subparsers.add_parser("sweep",
                              help="evaluate across fusion weights")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--variant", type=_variant, default=DescriptorVariant.DIALOGUE)
    p.add_argument("--model", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--lambdas", type=_float_list, default=list(DEFAULT_LAMBDA_GRID))
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    _add_encoder_flags(p)

    p = subparsers.add_parser("ablate",
                              help="query-set ablation table")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--cache-dir", required=True,
                   help="directory for per-set descriptor caches")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    _add_encoder_flags(p)
    _add_llm_flags(p)
    _add_query_flags(p)
    _add_fusion_flag(p)

    p = subparsers.add_parser("sensitivity",
                              help="object-noise sensitivity table")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--variant", type=_variant, default=DescriptorVariant.DIALOGUE)
    p.add_argument("--model", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--rates", type=_float_list, default=list(DEFAULT_RATES))
    p.add_argument("--modes", type=_str_list, default=list(DEFAULT_MODES))
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--vocab-corpus", default=None,
                   help="corpus supplying replacement objects (defaults to --corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    _add_encoder_flags(p)
    _add_fusion_flag(p)

    p = subparsers.add_parser("ensemble",
                              help="combine several descriptor variants")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--descriptors", action="append", required=True,
                   help="descriptor cache per variant (repeatable)")
    p.add_argument("--variants", type=_str_list, default=None,
                   help="variant per cache when a cache holds several")
    p.add_argument("--weights", type=_float_list, default=None)
    p.add_argument("--method", choices=["zscore", "rank"], default="zscore")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    _add_encoder_flags(p)
    _add_fusion_flag(p)

    p = subparsers.add_parser("serve",
                              help="HTTP retrieval endpoint")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--checkpoint", default=None)
    _add_encoder_flags(p)
    _add_llm_flags(p)
    _add_query_flags(p)
    _add_fusion_flag(p)

    return parser


def _option_registry(parser: _Parser) -> dict[str, dict[str, str]]:
    """Per-verb map of config keys (dest names) to their option strings."""
    registry: dict[str, dict[str, str]] = {}
    subparsers_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    for verb, sub in subparsers_action.choices.items():
        options = {}
        for action in sub._actions:
            if not action.option_strings or action.dest == "help":
                continue
            options[action.dest] = action.option_strings[0]
        registry[verb] = options
    return registry


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise UsageError(f"config line {line_no} is not key = value: {stripped!r}")
            key, _, value = stripped.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _config_argv(verb: str, config_path: str, registry: dict) -> list[str]:
    """Turn config-file values into argv tokens placed before user flags."""
    values = _load_config_file(config_path)
    known_anywhere = {dest for options in registry.values() for dest in options}
    verb_options = registry[verb]
    tokens: list[str] = []
    for key, value in values.items():
        if key not in known_anywhere:
            raise UsageError(f"config key {key!r} matches no flag of any verb")
        if key not in verb_options:
            continue  # valid for another verb; ignore here
        flag = verb_options[key]
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
            continue
        tokens.extend([flag, value])
    return tokens


def parse_command(argv: list[str]) -> Command:
    """Resolve argv (plus any config file) into a verb and options."""
    parser = build_parser()
    if not argv:
        raise UsageError("missing verb (try --help)")
    verb = argv[0]
    if verb in ("-h", "--help"):
        parser.parse_args(argv)  # prints help and exits
    registry = _option_registry(parser)
    if verb not in registry:
        raise UsageError(f"unknown verb {verb!r}")

    config_path = None
    rest = argv[1:]
    for i, token in enumerate(rest):
        if token == "--config" and i + 1 < len(rest):
            config_path = rest[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    injected = _config_argv(verb, config_path, registry) if config_path else []
    namespace = parser.parse_args([verb] + injected + rest)
    options = vars(namespace)
    options.pop("verb", None)
    return Command(verb=verb, options=options)


# ---- shared builders -----------------------------------------------------------


def _env(name: str) -> str | None:
    import os

    value = os.environ.get(name)
    return value if value else None


def _build_encoder(options: dict):
    kind = options.get("encoder", "mock")
    budget = options.get("text_budget", DEFAULT_TEXT_BUDGET)
    if kind == "mock":
        return MockEncoder(
            dim=options.get("dim", 32), seed=options.get("encoder_seed", 0), text_budget=budget
        )
    if kind == "store":
        store_path = options.get("store")
        if not store_path:
            raise UsageError("--encoder store needs --store")
        return StoreEncoder(read_store(store_path), text_budget=budget)
    url = options.get("embed_url") or _env("EMBED_BASE_URL")
    if not url:
        raise UsageError("--encoder remote needs --embed-url or EMBED_BASE_URL")
    return RemoteEncoder(url, text_budget=budget)


def _build_llm(options: dict) -> LlmClient | None:
    url = options.get("llm_url") or _env("LLM_BASE_URL")
    model = options.get("model")
    if not url or not model:
        return None
    config = LlmEndpointConfig(
        base_url=url,
        model=model,
        api_key=options.get("api_key") or _env("LLM_API_KEY"),
        timeout=options.get("timeout", 60.0),
        max_retries=options.get("max_retries", 3),
    )
    return LlmClient(config)


def _require_llm(options: dict, purpose: str) -> LlmClient:
    llm = _build_llm(options)
    if llm is None:
        raise UsageError(f"{purpose} needs --llm-url (or LLM_BASE_URL) and --model")
    return llm


def _build_query_set(options: dict):
    query_set = default_query_set()
    for key in options.get("drop_query") or []:
        try:
            query_set = query_set.without(key)
        except KeyError:
            raise UsageError(f"--drop-query: no default query named {key!r}")
    extras = extra_queries()
    for key in options.get("add_query") or []:
        if key not in extras:
            raise UsageError(
                f"--add-query: unknown query {key!r} (choices: {', '.join(sorted(extras))})"
            )
        query_set = query_set.plus(extras[key])
    return query_set


def _load_split(options: dict, key: str = "corpus") -> Corpus:
    return load_corpus(options[key], options.get("split"))


def _selected_descriptors(options: dict, corpus: Corpus, key: str = "descriptors"):
    cache = load_descriptor_cache(options[key])
    return select_descriptors(
        cache, corpus.dialogues, options.get("variant", DescriptorVariant.DIALOGUE),
        options.get("model"),
    )


def _load_adapters(options: dict):
    path = options.get("checkpoint")
    return load_checkpoint(path) if path else None


def _jsonable(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_sidecar(verb: str, options: dict, artifact: str | Path) -> None:
    payload = {"verb": verb, "options": _jsonable(options)}
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    Path(str(artifact) + ".config.json").write_text(text, encoding="utf-8")


def _canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# ---- verb handlers ----------------------------------------------------------------


def _cmd_generate(options: dict) -> int:
    corpus = _load_split(options)
    variant = options["variant"]
    query_set = _build_query_set(options)
    llm = None
    if variant in (DescriptorVariant.SUMMARY, DescriptorVariant.GUESSING,
                   DescriptorVariant.QUERIES):
        llm = _require_llm(options, f"variant {variant.value!r}")
    elif variant == DescriptorVariant.PROVIDED_CAPTION:
        raise UsageError("captions are ingested, not generated; embed their cache directly")
    descriptors = generate_with_cache(
        corpus.dialogues, variant, options["out"], query_set=query_set, llm=llm
    )
    _write_sidecar("generate", options, options["out"])
    print(f"wrote {len(descriptors)} descriptors to {options['out']}")
    return EXIT_OK


def _cmd_embed(options: dict) -> int:
    corpus = _load_split(options)
    encoder = _build_encoder(options)
    if isinstance(encoder, StoreEncoder):
        raise UsageError("embed needs a generative encoder (mock or remote)")
    budget = options.get("text_budget", DEFAULT_TEXT_BUDGET)

    texts: list[str] = [render_object_list(p.objects) for p in corpus.photos]
    for cache_path in options.get("descriptors") or []:
        cache = load_descriptor_cache(cache_path)
        texts.extend(d.text for d in cache.values())
    unique_texts: dict[str, str] = {}
    for text in texts:
        unique_texts.setdefault(text_key(text, budget), text)

    keys = list(unique_texts)
    vectors = encoder.encode_texts([unique_texts[k] for k in keys])
    store = EmbeddingStore(dim=vectors.shape[1])
    for key, vector in zip(keys, vectors):
        store.put(key, vector)
    image_refs: dict[str, None] = {}
    for photo in corpus.photos:
        image_refs.setdefault(photo.image_ref)
    refs = list(image_refs)
    for ref, vector in zip(refs, encoder.encode_images(refs)):
        store.put(image_key(ref), vector)

    write_store(store, options["out"])
    _write_sidecar("embed", options, options["out"])
    print(f"embedded {len(store.records)} records into {options['out']}")
    return EXIT_OK


def _cmd_retrieve(options: dict) -> int:
    corpus = _load_split(options)
    if options["dialogue"] == "-":
        raw = sys.stdin.read()
    else:
        raw = Path(options["dialogue"]).read_text(encoding="utf-8")
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"dialogue input is not valid JSON ({exc.msg})") from exc
    dialogue = parse_dialogue_record(record)

    variant = options["variant"]
    query_set = _build_query_set(options)
    if variant == DescriptorVariant.DIALOGUE:
        descriptor = generate_descriptor(dialogue, variant)
    elif variant == DescriptorVariant.PROVIDED_CAPTION:
        raise UsageError("the caption variant cannot be generated for ad-hoc dialogues")
    else:
        llm = _require_llm(options, f"variant {variant.value!r}")
        if options.get("cache"):
            descriptor = generate_with_cache(
                [dialogue], variant, options["cache"], query_set=query_set, llm=llm
            )[0]
        else:
            descriptor = generate_descriptor(dialogue, variant, query_set=query_set, llm=llm)

    encoder = _build_encoder(options)
    adapters = _load_adapters(options)
    candidates = Corpus(photos=corpus.photos, dialogues=[dialogue])
    matrix = score_all([descriptor], candidates, encoder, adapters)
    ranking = rank(matrix, FusionConfig(options["vision_weight"]))[0]
    k = max(1, options["k"])
    payload = {"photo_ids": ranking.photo_ids[:k], "scores": ranking.scores[:k]}
    text = json.dumps(payload, sort_keys=True)
    print(text)
    if options.get("out"):
        Path(options["out"]).write_text(text + "\n", encoding="utf-8")
        _write_sidecar("retrieve", options, options["out"])
    return EXIT_OK


def _cmd_train(options: dict) -> int:
    train_corpus = load_corpus(options["train_corpus"], options.get("split"))
    val_corpus = load_corpus(options["val_corpus"], options.get("split"))
    train_descs = _selected_descriptors(options, train_corpus, "descriptors")
    val_descs = _selected_descriptors(options, val_corpus, "val_descriptors")
    encoder = _build_encoder(options)
    config = TrainConfig(
        epochs=options["epochs"],
        batch_size=options["batch_size"],
        learning_rate=options["learning_rate"],
        vision_weight=options["vision_weight"],
        seed=options["seed"],
        init_tau=options["init_tau"],
        symmetric=options["symmetric"],
    )
    params, history = train(train_corpus, train_descs, val_corpus, val_descs, encoder, config)
    best = max(history, key=lambda row: row["val_avg"])
    save_checkpoint(
        params,
        options["out"],
        metadata={
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "vision_weight": config.vision_weight,
            "seed": config.seed,
            "symmetric": config.symmetric,
            "best_epoch": best["epoch"],
            "best_val_avg": best["val_avg"],
        },
    )
    history_path = Path(str(options["out"]) + ".history.json")
    history_path.write_text(_canonical_json({"history": history}), encoding="utf-8")
    _write_sidecar("train", options, options["out"])
    print(
        f"trained {config.epochs} epochs; best epoch {best['epoch']} "
        f"val avg {best['val_avg']:.4f}; checkpoint at {options['out']}"
    )
    return EXIT_OK


def _cmd_evaluate(options: dict) -> int:
    corpus = _load_split(options)
    descriptors = _selected_descriptors(options, corpus)
    encoder = _build_encoder(options)
    adapters = _load_adapters(options)
    report = evaluate(
        corpus, descriptors, encoder, adapters,
        vision_weight=options["vision_weight"], seeds=options["seeds"],
    )
    write_report(options["out"], report.config, [report.row()], options.get("csv"))
    _write_sidecar("evaluate", options, options["out"])
    row = report.row()
    print(
        f"R@1 {row['r1']:.4f}  R@5 {row['r5']:.4f}  R@10 {row['r10']:.4f}  "
        f"avg {row['avg']:.4f}"
    )
    return EXIT_OK


def _cmd_sweep(options: dict) -> int:
    corpus = _load_split(options)
    descriptors = _selected_descriptors(options, corpus)
    encoder = _build_encoder(options)
    adapters = _load_adapters(options)
    reports = sweep_lambda(
        corpus, descriptors, encoder, adapters,
        lambdas=options["lambdas"], seeds=options["seeds"],
    )
    config = dict(reports[0].config)
    config["vision_weight"] = list(options["lambdas"])
    write_report(options["out"], config, [r.row() for r in reports], options.get("csv"))
    _write_sidecar("sweep", options, options["out"])
    best = max(reports, key=lambda r: r.avg)
    print(f"swept {len(reports)} weights; best avg {best.avg:.4f} at lambda {best.axis}")
    return EXIT_OK


def _cmd_ablate(options: dict) -> int:
    corpus = _load_split(options)
    encoder = _build_encoder(options)
    llm = _require_llm(options, "query ablation")
    reports = ablate_queries(
        corpus,
        encoder,
        llm,
        options["cache_dir"],
        removals=options.get("drop_query") or None,
        additions=options.get("add_query") or None,
        vision_weight=options["vision_weight"],
        seeds=options["seeds"],
    )
    config = dict(reports[0].config)
    config.pop("query_keys", None)
    write_report(options["out"], config, [r.row() for r in reports], options.get("csv"))
    _write_sidecar("ablate", options, options["out"])
    print(f"wrote {len(reports)} ablation rows to {options['out']}")
    return EXIT_OK


def _cmd_sensitivity(options: dict) -> int:
    corpus = _load_split(options)
    descriptors = _selected_descriptors(options, corpus)
    encoder = _build_encoder(options)
    adapters = _load_adapters(options)
    vocabulary = None
    if options.get("vocab_corpus"):
        vocab_corpus = load_corpus(options["vocab_corpus"], options.get("split"))
        vocabulary = sorted({o for p in vocab_corpus.photos for o in p.objects})
    reports = sensitivity(
        corpus, descriptors, encoder, adapters,
        vision_weight=options["vision_weight"],
        rates=options["rates"], modes=options["modes"], seeds=options["seeds"],
        vocabulary=vocabulary,
    )
    config = dict(reports[0].config)
    config.pop("mode", None)
    config.pop("rate", None)
    config["rates"] = list(options["rates"])
    config["modes"] = list(options["modes"])
    write_report(options["out"], config, [r.row() for r in reports], options.get("csv"))
    _write_sidecar("sensitivity", options, options["out"])
    print(f"wrote {len(reports)} sensitivity rows to {options['out']}")
    return EXIT_OK


def _cmd_ensemble(options: dict) -> int:
    corpus = _load_split(options)
    encoder = _build_encoder(options)
    adapters = _load_adapters(options)
    caches = options["descriptors"]
    variants = options.get("variants")
    if variants is not None and len(variants) != len(caches):
        raise UsageError(f"{len(variants)} variants for {len(caches)} caches")

    matrices = []
    labels = []
    for i, cache_path in enumerate(caches):
        cache = load_descriptor_cache(cache_path)
        if variants is not None:
            variant = _variant_or_usage(variants[i])
        else:
            present = {var for (_, var, _) in cache}
            if len(present) != 1:
                raise UsageError(
                    f"{cache_path} holds variants {sorted(present)}; pass --variants"
                )
            variant = DescriptorVariant(present.pop())
        descriptors = select_descriptors(cache, corpus.dialogues, variant, options.get("model"))
        matrices.append(score_all(descriptors, corpus, encoder, adapters))
        labels.append(variant.value)

    fusion = FusionConfig(options["vision_weight"])
    targets = {d.id: d.target_photo_id for d in corpus.dialogues}
    rows = []
    for label, matrix in zip(labels, matrices):
        ranks = target_ranks(rank(matrix, fusion), targets)
        row = {"axis": label}
        row.update({f"r{k}": recall_at_k(ranks, k) for k in (1, 5, 10)})
        row["avg"] = sum(row[f"r{k}"] for k in (1, 5, 10)) / 3
        rows.append(row)
    combined = ensemble(matrices, fusion, options.get("weights"), options["method"])
    ranks = target_ranks(combined, targets)
    row = {"axis": "ensemble"}
    row.update({f"r{k}": recall_at_k(ranks, k) for k in (1, 5, 10)})
    row["avg"] = sum(row[f"r{k}"] for k in (1, 5, 10)) / 3
    rows.append(row)

    config = {
        "encoder": encoder.describe(),
        "adapters": adapters is not None,
        "vision_weight": options["vision_weight"],
        "method": options["method"],
        "weights": options.get("weights"),
        "members": labels,
        "n_dialogues": len(corpus.dialogues),
        "n_photos": len(corpus.photos),
    }
    write_report(options["out"], config, rows, options.get("csv"))
    _write_sidecar("ensemble", options, options["out"])
    print(f"ensembled {len(labels)} variants; avg {rows[-1]['avg']:.4f}")
    return EXIT_OK


def _variant_or_usage(text: str) -> DescriptorVariant:
    try:
        return DescriptorVariant(text)
    except ValueError:
        raise UsageError(f"unknown variant {text!r}") from None


def build_service(options: dict) -> RetrievalService:
    """Assemble the retrieval service a serve invocation would run."""
    corpus = _load_split(options)
    encoder = _build_encoder(options)
    adapters = _load_adapters(options)
    return RetrievalService(
        corpus=corpus,
        encoder=encoder,
        fusion=FusionConfig(options["vision_weight"]),
        adapters=adapters,
        llm=_build_llm(options),
        query_set=_build_query_set(options),
        default_k=options["k"],
    )


def _cmd_serve(options: dict) -> int:
    service = build_service(options)
    server = build_server(service, options["host"], options["port"])
    host, port = server.server_address[:2]
    print(f"serving retrieval on http://{host}:{port}/retrieve")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


_HANDLERS = {
    "generate": _cmd_generate,
    "embed": _cmd_embed,
    "retrieve": _cmd_retrieve,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "sensitivity": _cmd_sensitivity,
    "ensemble": _cmd_ensemble,
    "serve": _cmd_serve,
}


def run(command: Command) -> int:
    """Execute a parsed command. Raises photoseek errors for the caller to map."""
    return _HANDLERS[command.verb](command.options)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        command = parse_command(argv)
        return run(command)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _UPSTREAM_ERRORS as exc:
        print(f"upstream error: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
