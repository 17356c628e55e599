"""Query-time routing between stored answers and on-the-fly generation.

A query is embedded with the same provider the index was built with and
matched against the stored questions. When the best inner-product score
clears the threshold the stored answer is returned verbatim and the chat
provider is never touched; that is where the latency win comes from.
Otherwise the chunks backing the top-k matched QA pairs are aggregated in
document order and handed to the chat provider for grounded generation.

Threshold comparison uses ``score >= threshold - 1e-6`` so a threshold of 1.0
still admits exact matches under float32 rounding.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .chunking import ChunkNode, ChunkTree
from .errors import ContextResolutionError, FingerprintMismatch
from .gateway import ChatProvider, ChatRequest, EmbedProvider
from .prompts import GENERATION_PROMPT_TEMPLATE
from .qaindex import QAIndex, ScoredHit

THRESHOLD_EPS = 1e-6
DEFAULT_THRESHOLD = 0.9
DEFAULT_TOP_K = 3
DEFAULT_MAX_CONTEXT_TOKENS = 4096
DEFAULT_NOT_ANSWERABLE = "Not answerable"


def default_generation_prompt(not_answerable: str = DEFAULT_NOT_ANSWERABLE) -> str:
    return GENERATION_PROMPT_TEMPLATE.format(not_answerable=not_answerable)


@dataclass
class RouterConfig:
    threshold: float = DEFAULT_THRESHOLD
    top_k: int = DEFAULT_TOP_K
    max_context_tokens: int = DEFAULT_MAX_CONTEXT_TOKENS
    not_answerable_text: str = DEFAULT_NOT_ANSWERABLE
    generation_system_prompt: str = ""
    generation_temperature: float = 0.2
    generation_max_tokens: int = 512

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_context_tokens < 1:
            raise ValueError("max_context_tokens must be >= 1")
        if not self.generation_system_prompt:
            self.generation_system_prompt = default_generation_prompt(
                self.not_answerable_text
            )


class AnswerMode(str, Enum):
    DIRECT = "direct"
    GENERATED = "generated"


@dataclass
class Answer:
    text: str
    mode: AnswerMode
    top_score: float
    hits: list[ScoredHit]
    source_node_ids: list[str]
    latency_ms: float


class ChunkStore:
    """Read-only node lookup across all persisted trees, with a stable
    per-document position for context ordering."""

    def __init__(self, trees: Sequence[ChunkTree]):
        self._nodes: dict[str, ChunkNode] = {}
        self._position: dict[str, int] = {}
        for tree in sorted(trees, key=lambda t: t.doc_id):
            for position, node in enumerate(tree.nodes.values()):
                self._nodes[node.node_id] = node
                self._position[node.node_id] = position

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def get(self, node_id: str) -> ChunkNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise ContextResolutionError(f"unknown node {node_id}") from None

    def context_order(self, node_ids: Sequence[str]) -> list[ChunkNode]:
        """Deduplicate and order nodes: per document, summaries before
        detail (level descending), then document position."""
        unique: list[str] = []
        seen: set[str] = set()
        for node_id in node_ids:
            if node_id not in seen:
                seen.add(node_id)
                unique.append(node_id)
        nodes = [self.get(node_id) for node_id in unique]
        return sorted(
            nodes, key=lambda n: (n.doc_id, -n.level, self._position[n.node_id])
        )


def clears_threshold(score: float, threshold: float) -> bool:
    return score >= threshold - THRESHOLD_EPS


def _truncate_tokens(text: str, max_tokens: int) -> str:
    words = text.split()
    if len(words) <= max_tokens:
        return text
    return " ".join(words[:max_tokens])


def answer_query(
    query: str,
    index: QAIndex,
    chunks: ChunkStore,
    embed: EmbedProvider,
    chat: ChatProvider,
    config: RouterConfig,
) -> Answer:
    """Answer one query: stored answer on a close match, grounded generation
    otherwise. Latency covers the whole operation wall-clock."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    if embed.fingerprint != index.embedder_fingerprint:
        raise FingerprintMismatch(
            f"index built with {index.embedder_fingerprint!r}, "
            f"query embedder is {embed.fingerprint!r}"
        )
    start = time.perf_counter()
    query_vec = embed.embed([query])[0]
    hits = index.search(query_vec, config.top_k)
    top = hits[0]
    if clears_threshold(top.score, config.threshold):
        meta = index.id_to_meta[top.qa_id]
        return Answer(
            text=meta["answer"],
            mode=AnswerMode.DIRECT,
            top_score=top.score,
            hits=hits,
            source_node_ids=[meta["node_id"]],
            latency_ms=(time.perf_counter() - start) * 1000.0,
        )
    nodes = chunks.context_order(
        [index.id_to_meta[hit.qa_id]["node_id"] for hit in hits]
    )
    context = _truncate_tokens(
        "\n\n".join(node.text for node in nodes), config.max_context_tokens
    )
    response = chat.complete(
        ChatRequest(
            system_prompt=config.generation_system_prompt,
            user_prompt=f"Context:\n{context}\n\nQuestion: {query}",
            temperature=config.generation_temperature,
            max_tokens=config.generation_max_tokens,
        )
    )
    return Answer(
        text=response.text.strip(),
        mode=AnswerMode.GENERATED,
        top_score=top.score,
        hits=hits,
        source_node_ids=[node.node_id for node in nodes],
        latency_ms=(time.perf_counter() - start) * 1000.0,
    )


def top_scores(
    queries: Sequence[str], index: QAIndex, embed: EmbedProvider
) -> np.ndarray:
    """Best match score per query; the dry-run core of route_fraction."""
    if not queries:
        raise ValueError("queries must be non-empty")
    vectors = embed.embed(list(queries))
    return np.array([float(np.max(index.scores(v))) for v in vectors])


def route_fraction(
    queries: Sequence[str],
    index: QAIndex,
    embed: EmbedProvider,
    thresholds: Sequence[float],
) -> dict[float, float]:
    """Fraction of queries that would route direct at each threshold.

    Computed without ever invoking generation; monotone nonincreasing in the
    threshold by construction.
    """
    scores = top_scores(queries, index, embed)
    return {
        float(tau): float(
            np.mean([clears_threshold(s, tau) for s in scores])
        )
        for tau in thresholds
    }
