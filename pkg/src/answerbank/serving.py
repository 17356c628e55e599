"""Shared serving state: everything the query path needs, loaded once.

Both the one-shot CLI query and the HTTP service answer from the same
bundle, so their behavior cannot drift. The bundle is immutable after load;
the service swaps in a fresh one on reload instead of mutating."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .chunking import ChunkNode, ChunkTree, load_tree
from .config import AppConfig, make_chat_provider, make_embed_provider
from .enrich import EnrichedDocument, load_enriched
from .errors import MissingArtifact
from .gateway import ChatProvider, EmbedProvider
from .prompts import GENERATION_PROMPT_TEMPLATE
from .qagen import load_bank
from .qaindex import QAIndex, load_index
from .router import Answer, ChunkStore, RouterConfig, answer_query
from .workspace import Workspace


def router_config_from(config: AppConfig,
                       threshold: float | None = None) -> RouterConfig:
    settings = config.router
    return RouterConfig(
        threshold=settings.threshold if threshold is None else threshold,
        top_k=settings.top_k,
        max_context_tokens=settings.max_context_tokens,
        not_answerable_text=settings.not_answerable,
        generation_system_prompt=GENERATION_PROMPT_TEMPLATE.format(
            not_answerable=settings.not_answerable
        ),
        generation_temperature=settings.generation_temperature,
        generation_max_tokens=settings.generation_max_tokens,
    )


@dataclass
class ServingBundle:
    config: AppConfig
    router_config: RouterConfig
    index: QAIndex
    chunks: ChunkStore
    embed: EmbedProvider
    chat: ChatProvider
    trees: dict[str, ChunkTree]
    enriched: dict[str, EnrichedDocument]
    bank_size: int

    def answer(self, query: str, threshold: float | None = None) -> Answer:
        config = self.router_config
        if threshold is not None:
            config = replace(config, threshold=threshold)
        return answer_query(
            query, self.index, self.chunks, self.embed, self.chat, config
        )


def load_bundle(
    workspace: Workspace,
    config: AppConfig,
    force_fingerprint: bool = False,
) -> ServingBundle:
    """Load index, bank, trees, and enrichment artifacts for serving."""
    if not workspace.index_path.exists():
        raise MissingArtifact(
            f"no index at {workspace.index_path}",
            needed_command="answerbank index",
        )
    embed = make_embed_provider(config.embed, config.base_dir)
    chat = make_chat_provider(config.chat, config.base_dir)
    index = load_index(
        workspace.index_path,
        expected_fingerprint=None if force_fingerprint else embed.fingerprint,
        force=force_fingerprint,
    )
    if force_fingerprint:
        # The operator accepted the mismatch; align the recorded identity so
        # the router's own guard does not re-reject every query.
        index.embedder_fingerprint = embed.fingerprint
    bank = load_bank(workspace.bank_path, workspace.manifest_path)
    trees = {}
    for path in workspace.tree_files():
        tree = load_tree(path)
        trees[tree.doc_id] = tree
    if not trees:
        raise MissingArtifact(
            f"no chunk trees under {workspace.trees_dir}",
            needed_command="answerbank chunk",
        )
    enriched = {}
    for path in workspace.enriched_files():
        doc = load_enriched(path)
        enriched[doc.doc_id] = doc
    return ServingBundle(
        config=config,
        router_config=router_config_from(config),
        index=index,
        chunks=ChunkStore(list(trees.values())),
        embed=embed,
        chat=chat,
        trees=trees,
        enriched=enriched,
        bank_size=len(bank.qa_pairs),
    )


def answer_as_dict(answer: Answer, threshold: float,
                   index: QAIndex) -> dict:
    """Wire form of a router Answer; lossless, including per-hit scores."""
    return {
        "answer": answer.text,
        "mode": answer.mode.value,
        "top_score": answer.top_score,
        "sources": [
            {
                "qa_id": hit.qa_id,
                "node_id": index.id_to_meta[hit.qa_id]["node_id"],
                "doc_id": index.id_to_meta[hit.qa_id]["doc_id"],
                "score": hit.score,
                "rank": hit.rank,
            }
            for hit in answer.hits
        ],
        "source_node_ids": answer.source_node_ids,
        "latency_ms": answer.latency_ms,
        "threshold": threshold,
    }


def node_sources(bundle: ServingBundle, node: ChunkNode) -> list[dict]:
    """Element-level provenance for a node, resolved through descendant
    leaves for summary nodes."""
    element_ids: list[str] = []
    seen: set[str] = set()

    def collect(current: ChunkNode) -> None:
        if current.is_leaf:
            for element_id in current.source_element_ids:
                if element_id not in seen:
                    seen.add(element_id)
                    element_ids.append(element_id)
            return
        tree = bundle.trees[current.doc_id]
        for child_id in current.child_ids:
            collect(tree.nodes[child_id])

    collect(node)
    doc = bundle.enriched.get(node.doc_id)
    by_id = {e.element_id: e for e in doc.elements} if doc else {}
    out = []
    for element_id in element_ids:
        element = by_id.get(element_id)
        entry = {"element_id": element_id}
        if element is not None:
            entry.update(
                kind=element.kind.value,
                provenance=element.provenance.value,
                page=element.page,
            )
        out.append(entry)
    return out
