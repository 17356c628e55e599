"""Hierarchical chunk tree construction.

Leaves are token-bounded contiguous chunks of the enriched element stream;
every level above is built by summarizing consecutive windows of the level
below until a single root remains, so the root carries a whole-document
summary and lower levels carry progressively finer detail.

Grouping is strictly sequential (consecutive windows, no clustering), which
keeps the build deterministic and preserves document order for QA provenance.
Leaf texts partition the stream byte-exactly: concatenating them in order
reproduces the enriched document text, including every whitespace run.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .enrich import EnrichedElement
from .errors import EmptyDocument
from .gateway import ChatProvider, ChatRequest, parallel_map
from .prompts import SUMMARY_PROMPT

TREE_SUFFIX = ".tree.json"
ELEMENT_SEPARATOR = "\n\n"
DEFAULT_TARGET_TOKENS = 1024
DEFAULT_FAN_OUT = 5


def token_count(text: str) -> int:
    """Token rule used everywhere: whitespace-delimited words."""
    return len(text.split())


@dataclass
class ChunkNode:
    node_id: str
    doc_id: str
    level: int
    text: str
    token_count: int
    child_ids: list[str]
    source_element_ids: list[str]

    @property
    def is_leaf(self) -> bool:
        return self.level == 0


@dataclass
class ChunkTree:
    doc_id: str
    root_id: str
    nodes: dict[str, ChunkNode]
    height: int

    def node(self, node_id: str) -> ChunkNode:
        return self.nodes[node_id]

    def leaves_in_order(self) -> list[ChunkNode]:
        """Level-0 nodes in document order (DFS through ordered children)."""
        out: list[ChunkNode] = []
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.child_ids))
        return out

    def validate(self, expected_text: str | None = None) -> None:
        """Assert every structural invariant; raises ValueError on violation.

        When expected_text is given, additionally checks that the leaf texts
        concatenate back to it exactly.
        """
        if self.root_id not in self.nodes:
            raise ValueError(f"root {self.root_id} not among nodes")
        referenced: set[str] = set()
        for node in self.nodes.values():
            if (node.level == 0) != (not node.child_ids):
                raise ValueError(f"{node.node_id}: level-0 iff childless violated")
            if node.token_count != token_count(node.text):
                raise ValueError(f"{node.node_id}: stale token_count")
            for child_id in node.child_ids:
                if child_id not in self.nodes:
                    raise ValueError(f"{node.node_id}: dangling child {child_id}")
                if child_id in referenced:
                    raise ValueError(f"{child_id}: referenced by two parents")
                referenced.add(child_id)
            if node.child_ids:
                child_levels = [self.nodes[c].level for c in node.child_ids]
                if node.level != 1 + max(child_levels):
                    raise ValueError(f"{node.node_id}: parent level rule violated")
        roots = set(self.nodes) - referenced
        if roots != {self.root_id}:
            raise ValueError(f"expected single root {self.root_id}, found {roots}")
        reachable = 0
        stack = [self.root_id]
        while stack:
            reachable += 1
            stack.extend(self.nodes[stack.pop()].child_ids)
        if reachable != len(self.nodes):
            raise ValueError("not all nodes reachable from root")
        if self.height != self.nodes[self.root_id].level:
            raise ValueError(f"height {self.height} != root level")
        if expected_text is not None:
            joined = "".join(leaf.text for leaf in self.leaves_in_order())
            if joined != expected_text:
                raise ValueError("leaf texts do not reproduce the source stream")


def document_stream(elements: Sequence[EnrichedElement]) -> str:
    """The canonical text stream the leaves partition."""
    return ELEMENT_SEPARATOR.join(e.text for e in elements)


def _split_segment(segment: str, target_tokens: int) -> list[str]:
    """Split one oversized segment at whitespace boundaries, losslessly.

    Boundaries fall at token starts, so each piece keeps the whitespace run
    that follows its last token and the pieces concatenate back to the exact
    segment.
    """
    starts = [m.start() for m in re.finditer(r"\S+", segment)]
    cuts = [starts[i] for i in range(target_tokens, len(starts), target_tokens)]
    pieces = []
    begin = 0
    for cut in cuts:
        pieces.append(segment[begin:cut])
        begin = cut
    pieces.append(segment[begin:])
    return pieces


def build_leaves(
    elements: Sequence[EnrichedElement],
    target_tokens: int = DEFAULT_TARGET_TOKENS,
    doc_id: str = "doc",
) -> list[ChunkNode]:
    """Greedily pack consecutive element texts into leaves of <= target tokens.

    An element longer than the target is split into its own run of leaves at
    whitespace boundaries. No overlap, order preserved, and each leaf records
    the element ids it covers.
    """
    if not elements:
        raise EmptyDocument("no elements to chunk")
    if target_tokens <= 0:
        raise ValueError("target_tokens must be positive")

    # (text segment, tokens, element_id); the inter-element separator rides on
    # the preceding segment so concatenation needs no joiner.
    segments = []
    for i, element in enumerate(elements):
        text = element.text + (ELEMENT_SEPARATOR if i < len(elements) - 1 else "")
        segments.append((text, token_count(text), element.element_id))
    if sum(tokens for _, tokens, _ in segments) == 0:
        raise EmptyDocument("document contains no tokens")

    leaves: list[ChunkNode] = []
    current_text: list[str] = []
    current_tokens = 0
    current_ids: list[str] = []

    def _flush() -> None:
        nonlocal current_text, current_tokens, current_ids
        if current_text:
            _emit("".join(current_text), current_ids)
            current_text, current_tokens, current_ids = [], 0, []

    def _emit(text: str, element_ids: list[str]) -> None:
        leaves.append(
            ChunkNode(
                node_id=f"{doc_id}/n0-{len(leaves)}",
                doc_id=doc_id,
                level=0,
                text=text,
                token_count=token_count(text),
                child_ids=[],
                source_element_ids=list(element_ids),
            )
        )

    for text, tokens, element_id in segments:
        if tokens > target_tokens:
            _flush()
            for piece in _split_segment(text, target_tokens):
                _emit(piece, [element_id])
            continue
        if current_tokens + tokens > target_tokens:
            _flush()
        current_text.append(text)
        current_tokens += tokens
        current_ids.append(element_id)
    _flush()
    return leaves


def build_tree(
    leaves: Sequence[ChunkNode],
    fan_out: int = DEFAULT_FAN_OUT,
    chat: ChatProvider | None = None,
    max_workers: int = 4,
) -> ChunkTree:
    """Summarize consecutive windows level by level until one root remains.

    A single leaf becomes the root itself (height 0). Summary failures abort
    the build: trees must be complete because internal nodes feed keyword and
    QA generation.
    """
    if not leaves:
        raise EmptyDocument("cannot build a tree from zero leaves")
    if fan_out < 2:
        raise ValueError("fan_out must be >= 2")
    doc_id = leaves[0].doc_id
    nodes: dict[str, ChunkNode] = {leaf.node_id: leaf for leaf in leaves}
    current: list[ChunkNode] = list(leaves)
    level = 0
    while len(current) > 1:
        if chat is None:
            raise ValueError("a chat provider is required to summarize > 1 leaf")
        level += 1
        groups = [current[i: i + fan_out] for i in range(0, len(current), fan_out)]

        def _summarize(group: list[ChunkNode]) -> str:
            source = ELEMENT_SEPARATOR.join(node.text for node in group)
            response = chat.complete(
                ChatRequest(
                    system_prompt=SUMMARY_PROMPT,
                    user_prompt=f"Summarize the following text:\n\n{source}",
                )
            )
            return response.text.strip()

        summaries = parallel_map(_summarize, groups, max_workers)
        parents = []
        for i, (group, summary) in enumerate(zip(groups, summaries)):
            parent = ChunkNode(
                node_id=f"{doc_id}/n{level}-{i}",
                doc_id=doc_id,
                level=level,
                text=summary,
                token_count=token_count(summary),
                child_ids=[node.node_id for node in group],
                source_element_ids=[],
            )
            nodes[parent.node_id] = parent
            parents.append(parent)
        current = parents
    return ChunkTree(
        doc_id=doc_id, root_id=current[0].node_id, nodes=nodes, height=current[0].level
    )


def iter_nodes_top_down(tree: ChunkTree) -> Iterator[ChunkNode]:
    """Nodes ordered by level descending (root first), position ascending."""
    by_level: dict[int, list[ChunkNode]] = {}
    for node in tree.nodes.values():
        by_level.setdefault(node.level, []).append(node)
    for level in sorted(by_level, reverse=True):
        yield from sorted(by_level[level], key=lambda n: _node_position(n.node_id))


def save_tree(tree: ChunkTree, path: Path) -> None:
    ordered = sorted(
        tree.nodes.values(), key=lambda n: (n.level, _node_position(n.node_id))
    )
    payload = {
        "doc_id": tree.doc_id,
        "root_id": tree.root_id,
        "height": tree.height,
        "nodes": [
            {
                "node_id": n.node_id,
                "doc_id": n.doc_id,
                "level": n.level,
                "text": n.text,
                "token_count": n.token_count,
                "child_ids": n.child_ids,
                "source_element_ids": n.source_element_ids,
            }
            for n in ordered
        ],
    }
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def load_tree(path: Path) -> ChunkTree:
    data = json.loads(path.read_text(encoding="utf-8"))
    nodes = {
        n["node_id"]: ChunkNode(
            node_id=n["node_id"],
            doc_id=n["doc_id"],
            level=n["level"],
            text=n["text"],
            token_count=n["token_count"],
            child_ids=list(n["child_ids"]),
            source_element_ids=list(n["source_element_ids"]),
        )
        for n in data["nodes"]
    }
    return ChunkTree(
        doc_id=data["doc_id"],
        root_id=data["root_id"],
        nodes=nodes,
        height=data["height"],
    )


def _node_position(node_id: str) -> int:
    m = re.search(r"-(\d+)$", node_id)
    return int(m.group(1)) if m else 0
