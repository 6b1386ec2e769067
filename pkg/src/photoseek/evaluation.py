"""Recall metrics, sweeps, ablations, and noise sensitivity.

The core metric is recall at k: the fraction of dialogues whose target
photo lands in the top k of the ranking. Model selection and summary
tables use the average of R@1, R@5, and R@10. Everything here is a pure
function of its inputs; seeds only matter where something is actually
drawn (object perturbation), so repeated runs reproduce reports byte for
byte.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .corpus import Corpus, perturb_objects
from .descriptors import (
    DescriptorVariant,
    QuerySet,
    default_query_set,
    extra_queries,
    generate_with_cache,
)
from .embeddings import Encoder
from .errors import ValidationError
from .scoring import FusionConfig, Ranking, rank, score_all

if TYPE_CHECKING:
    from .descriptors import Descriptor
    from .llm import LlmClient
    from .training import AdapterParams

DEFAULT_KS = (1, 5, 10)
DEFAULT_LAMBDA_GRID = tuple(round(0.2 * i, 1) for i in range(11))
DEFAULT_RATES = (0.0, 0.15, 0.25, 0.35)
DEFAULT_MODES = ("missing", "incorrect", "both")


def recall_at_k(target_ranks: Sequence[int], k: int) -> float:
    """Fraction of 1-based target ranks that are at most k."""
    ranks = np.asarray(target_ranks)
    if ranks.size == 0:
        raise ValueError("recall needs at least one rank")
    if k < 1:
        raise ValueError("k must be at least 1")
    if np.any(ranks < 1):
        raise ValueError("ranks are 1-based and must be positive")
    return float(np.count_nonzero(ranks <= k) / ranks.size)


def target_ranks(rankings: Sequence[Ranking], targets: dict[str, str]) -> np.ndarray:
    """1-based rank of each dialogue's target photo."""
    out = []
    for ranking in rankings:
        target = targets.get(ranking.dialogue_id)
        if target is None:
            raise ValidationError(f"dialogue {ranking.dialogue_id!r} has no target photo")
        try:
            out.append(ranking.photo_ids.index(target) + 1)
        except ValueError:
            raise ValidationError(
                f"target {target!r} missing from candidates of {ranking.dialogue_id!r}"
            ) from None
    return np.asarray(out, dtype=np.int64)


def _corpus_targets(corpus: Corpus) -> dict[str, str]:
    targets = {}
    for dialogue in corpus.dialogues:
        if dialogue.target_photo_id is None:
            raise ValidationError(f"dialogue {dialogue.id!r} has no target photo")
        targets[dialogue.id] = dialogue.target_photo_id
    return targets


def split_metrics(
    corpus: Corpus,
    descriptors: Sequence["Descriptor"],
    encoder: Encoder,
    adapters: "AdapterParams | None" = None,
    vision_weight: float = 1.0,
    ks: tuple[int, ...] = DEFAULT_KS,
) -> dict[int, float]:
    """Recall at each k for one scored split."""
    matrix = score_all(descriptors, corpus, encoder, adapters)
    rankings = rank(matrix, FusionConfig(vision_weight))
    ranks = target_ranks(rankings, _corpus_targets(corpus))
    return {k: recall_at_k(ranks, k) for k in ks}


# ---- reports -----------------------------------------------------------------------


@dataclass
class EvalReport:
    axis: str
    config: dict
    per_seed: dict[int, dict[int, float]]
    averaged: dict[int, float]
    avg: float
    runtime_seconds: float

    def row(self) -> dict:
        row = {"axis": self.axis}
        row.update({f"r{k}": self.averaged[k] for k in sorted(self.averaged)})
        row["avg"] = self.avg
        return row


def _build_report(
    axis: str, config: dict, per_seed: dict[int, dict[int, float]], ks, started: float
) -> EvalReport:
    averaged = {k: float(np.mean([m[k] for m in per_seed.values()])) for k in ks}
    avg = float(np.mean([averaged[k] for k in ks]))
    return EvalReport(
        axis=axis,
        config=config,
        per_seed=per_seed,
        averaged=averaged,
        avg=avg,
        runtime_seconds=time.perf_counter() - started,
    )


def _snapshot(encoder: Encoder, adapters, vision_weight, seeds, ks, corpus: Corpus, **extra):
    config = {
        "encoder": encoder.describe(),
        "adapters": adapters is not None,
        "vision_weight": vision_weight,
        "seeds": list(seeds),
        "ks": list(ks),
        "n_dialogues": len(corpus.dialogues),
        "n_photos": len(corpus.photos),
    }
    config.update(extra)
    return config


def evaluate(
    corpus: Corpus,
    descriptors: Sequence["Descriptor"],
    encoder: Encoder,
    adapters: "AdapterParams | None" = None,
    vision_weight: float = 1.0,
    seeds: Sequence[int] = (0,),
    ks: tuple[int, ...] = DEFAULT_KS,
    axis: str = "all",
) -> EvalReport:
    """Score a split and report recall, averaged over seeds.

    Plain evaluation draws nothing, so every seed reproduces the same
    metrics; the per-seed breakdown exists for protocol symmetry with the
    perturbed and trained settings where seeds do change the outcome.
    """
    started = time.perf_counter()
    metrics = split_metrics(corpus, descriptors, encoder, adapters, vision_weight, ks)
    per_seed = {int(seed): dict(metrics) for seed in seeds}
    config = _snapshot(encoder, adapters, vision_weight, seeds, ks, corpus)
    return _build_report(axis, config, per_seed, ks, started)


def sweep_lambda(
    corpus: Corpus,
    descriptors: Sequence["Descriptor"],
    encoder: Encoder,
    adapters: "AdapterParams | None" = None,
    lambdas: Sequence[float] = DEFAULT_LAMBDA_GRID,
    seeds: Sequence[int] = (0,),
    ks: tuple[int, ...] = DEFAULT_KS,
) -> list[EvalReport]:
    """Evaluate one fixed scoring across a grid of fusion weights.

    The score matrix is computed once; each row matches what a standalone
    evaluate call at that weight would produce.
    """
    matrix = score_all(descriptors, corpus, encoder, adapters)
    targets = _corpus_targets(corpus)
    reports = []
    for lam in lambdas:
        started = time.perf_counter()
        rankings = rank(matrix, FusionConfig(lam))
        ranks = target_ranks(rankings, targets)
        metrics = {k: recall_at_k(ranks, k) for k in ks}
        per_seed = {int(seed): dict(metrics) for seed in seeds}
        config = _snapshot(encoder, adapters, lam, seeds, ks, corpus)
        reports.append(_build_report(f"{lam:g}", config, per_seed, ks, started))
    return reports


def ablate_queries(
    corpus: Corpus,
    encoder: Encoder,
    llm: "LlmClient",
    cache_dir: str | Path,
    base_set: QuerySet | None = None,
    removals: Sequence[str] | None = None,
    additions: Sequence[str] | None = None,
    adapters: "AdapterParams | None" = None,
    vision_weight: float = 1.0,
    seeds: Sequence[int] = (0,),
    ks: tuple[int, ...] = DEFAULT_KS,
) -> list[EvalReport]:
    """Re-evaluate the query variant with single queries removed or added.

    Produces one row for the full set, one per removed query ("- key"),
    and one per optional addition ("+ key"). Each modified set keeps its
    own descriptor cache file under ``cache_dir`` (named by a fingerprint
    of the set), so a warm rerun regenerates nothing and reproduces the
    table exactly.
    """
    base = base_set or default_query_set()
    if removals is None:
        removals = base.keys()
    extras = extra_queries()
    if additions is None:
        additions = list(extras)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)

    rows: list[tuple[str, QuerySet]] = [("original", base)]
    for key in removals:
        rows.append((f"- {key}", base.without(key)))
    for key in additions:
        query = extras.get(key)
        if query is None:
            raise KeyError(f"no optional query named {key!r}")
        rows.append((f"+ {key}", base.plus(query)))

    reports = []
    for axis, query_set in rows:
        cache_path = cache_dir / f"queries-{query_set.fingerprint()}.jsonl"
        descriptors = generate_with_cache(
            corpus.dialogues,
            DescriptorVariant.QUERIES,
            cache_path,
            query_set=query_set,
            llm=llm,
        )
        report = evaluate(
            corpus, descriptors, encoder, adapters, vision_weight, seeds, ks, axis=axis
        )
        report.config["query_keys"] = query_set.keys()
        reports.append(report)
    return reports


def sensitivity(
    corpus: Corpus,
    descriptors: Sequence["Descriptor"],
    encoder: Encoder,
    adapters: "AdapterParams | None" = None,
    vision_weight: float = 1.0,
    rates: Sequence[float] = DEFAULT_RATES,
    modes: Sequence[str] = DEFAULT_MODES,
    seeds: Sequence[int] = (0, 1, 2),
    vocabulary: Sequence[str] | None = None,
    ks: tuple[int, ...] = DEFAULT_KS,
    include_total_missing: bool = True,
) -> list[EvalReport]:
    """Measure how retrieval degrades as object lists are corrupted.

    For every (mode, rate) cell the corpus is perturbed once per seed and
    re-scored; the row reports the seed average. A final all-objects-missing
    row is appended by default since it isolates the vision score entirely.
    """
    cells = [(mode, rate) for mode in modes for rate in rates]
    if include_total_missing and ("missing", 1.0) not in cells:
        cells.append(("missing", 1.0))
    reports = []
    for mode, rate in cells:
        started = time.perf_counter()
        per_seed = {}
        for seed in seeds:
            perturbed = perturb_objects(corpus, rate, mode, seed, vocabulary)
            per_seed[int(seed)] = split_metrics(
                perturbed, descriptors, encoder, adapters, vision_weight, ks
            )
        config = _snapshot(
            encoder, adapters, vision_weight, seeds, ks, corpus, mode=mode, rate=rate
        )
        reports.append(_build_report(f"{mode}@{rate:g}", config, per_seed, ks, started))
    return reports


# ---- report files --------------------------------------------------------------------


def write_report(
    path: str | Path,
    config: dict,
    rows: Sequence[dict],
    csv_path: str | Path | None = None,
) -> None:
    """Persist a report as JSON {config, rows} and optionally as CSV.

    Output is canonical (sorted keys, fixed indentation) so identical
    inputs serialize to identical bytes.
    """
    payload = {"config": config, "rows": list(rows)}
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    if csv_path is not None:
        fieldnames = list(rows[0].keys()) if rows else ["axis"]
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
