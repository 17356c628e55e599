"""Offline QA pre-generation with hybrid answer routing.

Documents arrive as layout-analysis JSON, get their tables and figures
described into text, are chunked into a summary tree, and yield a bank of
question-answer pairs whose questions are embedded into an exact-search
index. At query time a close question match returns its stored answer
immediately; everything else falls back to retrieval-augmented generation
over the chunks behind the nearest stored questions.
"""

from .chunking import (
    ChunkNode,
    ChunkTree,
    build_leaves,
    build_tree,
    document_stream,
    iter_nodes_top_down,
    load_tree,
    save_tree,
    token_count,
)
from .config import AppConfig, load_config, stage_config_hash
from .enrich import (
    EnrichedDocument,
    EnrichedElement,
    Provenance,
    describe_element,
    enrich_document,
    load_enriched,
    save_enriched,
)
from .errors import (
    AnswerBankError,
    AuthError,
    ConfigHashMismatch,
    ContextResolutionError,
    CorruptIndex,
    DimMismatch,
    EmptyDocument,
    EmptyIndex,
    FingerprintMismatch,
    MalformedInput,
    MissingArtifact,
    ProviderUnavailable,
    Unparseable,
    ZeroVector,
)
from .evaluation import (
    EvalExample,
    EvalReport,
    QAQualityScores,
    judge_qa_quality,
    load_eval_set,
    normalize_answer,
    rouge_l,
    run_eval,
    threshold_sweep,
    token_f1,
)
from .gateway import (
    ChatProvider,
    ChatRequest,
    ChatResponse,
    EmbedProvider,
    HttpChatProvider,
    HttpEmbedProvider,
    MockChatProvider,
    MockEmbedProvider,
    normalize_vector,
)
from .ingest import (
    ElementKind,
    LayoutElement,
    ParsedDocument,
    parse_layout_file,
    serialize_document,
    validate_corpus,
)
from .keywords import KeywordConfig, KeywordSet, extract_keywords, keyword_count
from .qagen import QABank, QAPair, generate_bank, load_bank, save_bank
from .qaindex import QAIndex, ScoredHit, build_index, load_index, save_index
from .router import (
    Answer,
    AnswerMode,
    ChunkStore,
    RouterConfig,
    answer_query,
    route_fraction,
)
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "AnswerBankError",
    "AnswerMode",
    "AppConfig",
    "AuthError",
    "ChatProvider",
    "ChatRequest",
    "ChatResponse",
    "ChunkNode",
    "ChunkStore",
    "ChunkTree",
    "ConfigHashMismatch",
    "ContextResolutionError",
    "CorruptIndex",
    "DimMismatch",
    "ElementKind",
    "EmbedProvider",
    "EmptyDocument",
    "EmptyIndex",
    "EnrichedDocument",
    "EnrichedElement",
    "EvalExample",
    "EvalReport",
    "FingerprintMismatch",
    "HttpChatProvider",
    "HttpEmbedProvider",
    "KeywordConfig",
    "KeywordSet",
    "LayoutElement",
    "MalformedInput",
    "MissingArtifact",
    "MockChatProvider",
    "MockEmbedProvider",
    "ParsedDocument",
    "Provenance",
    "ProviderUnavailable",
    "QABank",
    "QAIndex",
    "QAPair",
    "QAQualityScores",
    "RouterConfig",
    "ScoredHit",
    "Unparseable",
    "Workspace",
    "ZeroVector",
    "answer_query",
    "build_index",
    "build_leaves",
    "build_tree",
    "describe_element",
    "document_stream",
    "enrich_document",
    "extract_keywords",
    "generate_bank",
    "iter_nodes_top_down",
    "judge_qa_quality",
    "keyword_count",
    "load_bank",
    "load_config",
    "load_enriched",
    "load_eval_set",
    "load_index",
    "load_tree",
    "normalize_answer",
    "normalize_vector",
    "parse_layout_file",
    "rouge_l",
    "route_fraction",
    "run_eval",
    "save_bank",
    "save_enriched",
    "save_index",
    "save_tree",
    "serialize_document",
    "stage_config_hash",
    "threshold_sweep",
    "token_count",
    "token_f1",
    "validate_corpus",
]
