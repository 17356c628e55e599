"""Per-node keyword extraction with level-scaled counts.

Higher tree layers aggregate more content, so they get more keywords; the
count follows a linear-with-cap rule that is monotone nondecreasing in the
level. The extraction itself is done by the chat provider, one keyword per
line, with a single re-prompt on shortfall before degrading gracefully.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .chunking import ChunkNode
from .errors import Unparseable
from .gateway import ChatProvider, ChatRequest
from .prompts import KEYWORD_PROMPT

DEFAULT_BASE = 3
DEFAULT_STEP = 2
DEFAULT_CAP = 10


@dataclass
class KeywordConfig:
    base: int = DEFAULT_BASE
    step: int = DEFAULT_STEP
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.base < 1:
            raise ValueError("base must be >= 1")
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if self.cap < self.base:
            raise ValueError("cap must be >= base")


@dataclass
class KeywordSet:
    node_id: str
    level: int
    keywords: list[str]
    shortfall: bool = False


def keyword_count(
    level: int,
    base: int = DEFAULT_BASE,
    step: int = DEFAULT_STEP,
    cap: int = DEFAULT_CAP,
) -> int:
    """min(base + step * level, cap): more keywords for higher layers."""
    if base < 1 or step < 0 or cap < base:
        raise ValueError("require base >= 1, step >= 0, cap >= base")
    return min(base + step * level, cap)


def _parse_keyword_lines(text: str) -> list[str]:
    keywords: list[str] = []
    seen: set[str] = set()
    for line in text.splitlines():
        line = re.sub(r"^\s*(?:[-*+]|\d+[.)])\s+", "", line).strip()
        if not line:
            continue
        folded = line.casefold()
        if folded not in seen:
            seen.add(folded)
            keywords.append(line)
    return keywords


def extract_keywords(
    node: ChunkNode, count: int, chat: ChatProvider
) -> KeywordSet:
    """Ask the provider for exactly ``count`` keywords for one node.

    Duplicates are removed under case-folded comparison; if fewer than
    ``count`` distinct keywords come back, the provider is re-prompted once
    and any remaining shortfall is flagged rather than failing the node.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not node.text.strip():
        raise ValueError(f"node {node.node_id} has no text")

    def _ask(note: str = "") -> list[str]:
        user_prompt = (
            f"Extract exactly {count} keywords from the passage below.{note}\n\n"
            f"Passage:\n{node.text}"
        )
        response = chat.complete(
            ChatRequest(system_prompt=KEYWORD_PROMPT, user_prompt=user_prompt)
        )
        return _parse_keyword_lines(response.text)

    keywords = _ask()
    if len(keywords) < count:
        retry = _ask(
            note=" The previous attempt returned too few distinct keywords; "
            "return the full number of distinct keywords."
        )
        merged = list(keywords)
        seen = {k.casefold() for k in merged}
        for keyword in retry:
            if keyword.casefold() not in seen:
                seen.add(keyword.casefold())
                merged.append(keyword)
        keywords = merged
    if not keywords:
        raise Unparseable(f"no keywords parsed for node {node.node_id}")
    return KeywordSet(
        node_id=node.node_id,
        level=node.level,
        keywords=keywords[:count],
        shortfall=len(keywords) < count,
    )
