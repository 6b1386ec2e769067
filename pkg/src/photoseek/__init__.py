"""Dialogue-to-photo retrieval via generated visual descriptors.

Given an ongoing two-party dialogue, the engine produces a textual
descriptor of the photo about to be shared (from the raw turns or through
an LLM), embeds it, and ranks a photo repository by a fused score: cosine
against each photo's object-list text plus a weighted cosine against the
image embedding. Linear adapters over the frozen embeddings can be trained
contrastively to specialize the spaces.
"""

from .corpus import (
    Corpus,
    Dialogue,
    PhotoCandidate,
    Turn,
    attach_provided_descriptors,
    load_corpus,
    perturb_objects,
    render_object_list,
    save_corpus,
)
from .descriptors import (
    Descriptor,
    DescriptorVariant,
    Query,
    QuerySet,
    build_prompt,
    default_query_set,
    extra_queries,
    generate_descriptor,
    generate_with_cache,
    load_descriptor_cache,
    parse_query_answers,
    render_descriptor,
)
from .embeddings import (
    EmbeddingStore,
    MockEncoder,
    RemoteEncoder,
    StoreEncoder,
    image_key,
    normalize,
    read_store,
    text_key,
    write_store,
)
from .evaluation import (
    EvalReport,
    ablate_queries,
    evaluate,
    recall_at_k,
    sensitivity,
    sweep_lambda,
    write_report,
)
from .llm import LlmClient, LlmEndpointConfig
from .scoring import (
    FusionConfig,
    Ranking,
    ScoreMatrix,
    cosine_similarity,
    ensemble,
    fuse,
    rank,
    score_all,
)
from .training import (
    AdapterParams,
    TrainConfig,
    adapter_forward,
    batch_gradients,
    batch_loss,
    infonce_loss,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterParams",
    "Corpus",
    "Descriptor",
    "DescriptorVariant",
    "Dialogue",
    "EmbeddingStore",
    "EvalReport",
    "FusionConfig",
    "LlmClient",
    "LlmEndpointConfig",
    "MockEncoder",
    "PhotoCandidate",
    "Query",
    "QuerySet",
    "Ranking",
    "RemoteEncoder",
    "ScoreMatrix",
    "StoreEncoder",
    "TrainConfig",
    "Turn",
    "ablate_queries",
    "adapter_forward",
    "attach_provided_descriptors",
    "batch_gradients",
    "batch_loss",
    "build_prompt",
    "cosine_similarity",
    "default_query_set",
    "ensemble",
    "evaluate",
    "extra_queries",
    "fuse",
    "generate_descriptor",
    "generate_with_cache",
    "image_key",
    "infonce_loss",
    "load_checkpoint",
    "load_corpus",
    "load_descriptor_cache",
    "normalize",
    "parse_query_answers",
    "perturb_objects",
    "rank",
    "read_store",
    "recall_at_k",
    "render_descriptor",
    "render_object_list",
    "save_checkpoint",
    "save_corpus",
    "score_all",
    "sensitivity",
    "sweep_lambda",
    "text_key",
    "train",
    "write_report",
    "write_store",
]
