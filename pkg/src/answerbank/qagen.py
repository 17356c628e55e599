"""Chain-of-thought QA pair generation over chunk trees.

One QA pair is requested per extracted keyword. The generation request
interpolates the node text, the keywords, and a bounded window of previously
generated questions into the fixed prompt pair; the response is parsed back
from ``Question:``/``Answer:`` blocks. Questions that quote banned referential
phrases or duplicate an earlier question of the same document are dropped and
reported as a shortfall instead of being repaired.
"""

from __future__ import annotations

import hashlib
import json
import string
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import prompts
from .chunking import ChunkTree, iter_nodes_top_down
from .errors import AnswerBankError, Unparseable
from .gateway import ChatProvider, ChatRequest
from .keywords import KeywordConfig, KeywordSet, extract_keywords, keyword_count

BANK_FILENAME = "bank.jsonl"
MANIFEST_FILENAME = "bank.manifest.json"
DEFAULT_BANNED_PHRASES = ("in the document", "according to the document")
DEFAULT_PRIOR_WINDOW = 20


@dataclass
class QAPair:
    qa_id: str
    doc_id: str
    node_id: str
    node_level: int
    question: str
    answer: str
    keywords_used: list[str]
    created_at: str


@dataclass
class QABank:
    bank_id: str
    qa_pairs: list[QAPair]
    build_manifest: dict = field(default_factory=dict)


@dataclass
class NodeQAResult:
    pairs: list[QAPair]
    shortfall: bool


def normalize_question(question: str) -> str:
    """Comparison form for duplicate detection: lowercase, collapsed
    whitespace, terminal punctuation stripped."""
    collapsed = " ".join(question.strip().lower().split())
    return collapsed.rstrip(string.punctuation + " ")


def contains_banned_phrase(
    question: str, banned: Sequence[str] = DEFAULT_BANNED_PHRASES
) -> bool:
    folded = question.casefold()
    return any(phrase.casefold() in folded for phrase in banned)


def _parse_qa_blocks(text: str) -> list[tuple[str, str]]:
    """Extract (question, answer) pairs from Question:/Answer: blocks."""
    pairs: list[tuple[str, str]] = []
    question: list[str] | None = None
    answer: list[str] | None = None

    def _close() -> None:
        nonlocal question, answer
        if question is not None and answer is not None:
            q = " ".join(" ".join(question).split())
            a = " ".join(" ".join(answer).split())
            if q and a:
                pairs.append((q, a))
        question, answer = None, None

    for line in text.splitlines():
        stripped = line.strip()
        if stripped.lower().startswith("question:"):
            _close()
            question = [stripped[len("question:"):].strip()]
            answer = None
        elif stripped.lower().startswith("answer:"):
            if question is not None:
                answer = [stripped[len("answer:"):].strip()]
        elif answer is not None:
            answer.append(stripped)
        elif question is not None:
            question.append(stripped)
    _close()
    return pairs


def _build_user_prompt(
    node_text: str, keywords: Sequence[str], prior_questions: Sequence[str]
) -> str:
    if prior_questions:
        prior_block = "\n".join(f"- {q}" for q in prior_questions)
    else:
        prior_block = "(none)"
    return (
        f"{prompts.QA_FEW_SHOT_EXAMPLE}\n\n"
        f"### text:\n{node_text}\n"
        f"### keywords: {json.dumps(list(keywords), ensure_ascii=False)}\n"
        f"### previously generated questions:\n{prior_block}\n\n"
        f"{prompts.QA_SYSTEM_PROMPT}"
    )


def generate_qa_for_node(
    node,
    keywords: KeywordSet,
    prior_questions: Sequence[str],
    chat: ChatProvider,
    banned_phrases: Sequence[str] = DEFAULT_BANNED_PHRASES,
    prior_window: int = DEFAULT_PRIOR_WINDOW,
    temperature: float = 0.2,
    max_tokens: int = 2048,
    clock: Callable[[], float] = time.time,
) -> NodeQAResult:
    """Generate up to one QA pair per keyword for a single chunk node.

    ``prior_questions`` is the full per-document history; only the most recent
    ``prior_window`` entries are interpolated into the prompt, but duplicates
    are checked against the whole history.
    """
    if not keywords.keywords:
        raise ValueError("keywords must be non-empty")
    if not node.text.strip():
        raise ValueError(f"node {node.node_id} has no text")

    window = list(prior_questions)[-prior_window:] if prior_window > 0 else []
    response = chat.complete(
        ChatRequest(
            system_prompt=prompts.QA_GENERATION_PROMPT,
            user_prompt=_build_user_prompt(node.text, keywords.keywords, window),
            temperature=temperature,
            max_tokens=max_tokens,
        )
    )
    blocks = _parse_qa_blocks(response.text)
    if not blocks:
        raise Unparseable(f"no Question:/Answer: blocks for node {node.node_id}")

    seen = {normalize_question(q) for q in prior_questions}
    created = _iso_utc(clock())
    pairs: list[QAPair] = []
    for question, answer in blocks:
        if len(pairs) >= len(keywords.keywords):
            break
        if contains_banned_phrase(question, banned_phrases):
            continue
        normalized = normalize_question(question)
        if not normalized or normalized in seen:
            continue
        seen.add(normalized)
        pairs.append(
            QAPair(
                qa_id=f"{node.node_id}#q{len(pairs)}",
                doc_id=node.doc_id,
                node_id=node.node_id,
                node_level=node.level,
                question=question,
                answer=answer,
                keywords_used=list(keywords.keywords),
                created_at=created,
            )
        )
    return NodeQAResult(pairs=pairs, shortfall=len(pairs) < len(keywords.keywords))


def generate_bank(
    trees: Sequence[ChunkTree],
    keyword_config: KeywordConfig,
    chat: ChatProvider,
    doc_domains: dict[str, str] | None = None,
    banned_phrases: Sequence[str] = DEFAULT_BANNED_PHRASES,
    prior_window: int = DEFAULT_PRIOR_WINDOW,
    temperature: float = 0.2,
    clock: Callable[[], float] = time.time,
) -> QABank:
    """Run keyword extraction and QA generation over every node of every tree.

    Nodes are visited top-down (root first) so broad questions precede
    detailed ones in the duplicate history. Provider failures skip the node
    with a manifest entry; an inconsistent tree aborts its whole document.
    """
    doc_domains = doc_domains or {}
    qa_pairs: list[QAPair] = []
    node_entries: list[dict] = []
    errors: list[dict] = []
    ledger: dict[str, dict] = {}

    for tree in sorted(trees, key=lambda t: t.doc_id):
        domain = doc_domains.get(tree.doc_id, "(untagged)")
        row = ledger.setdefault(
            domain,
            {
                "qa_pairs": 0,
                "nodes": 0,
                "keyword_ms": 0.0,
                "qa_ms": 0.0,
                "prompt_tokens": 0,
                "completion_tokens": 0,
            },
        )
        try:
            tree.validate()
        except ValueError as exc:
            errors.append(
                {"doc_id": tree.doc_id, "stage": "tree", "error": str(exc)}
            )
            continue
        prior_questions: list[str] = []
        for node in iter_nodes_top_down(tree):
            count = keyword_count(
                node.level, keyword_config.base, keyword_config.step, keyword_config.cap
            )
            usage_before = (chat.usage.prompt_tokens, chat.usage.completion_tokens)
            t0 = time.perf_counter()
            try:
                keyword_set = extract_keywords(node, count, chat)
            except AnswerBankError as exc:
                errors.append(
                    {"node_id": node.node_id, "stage": "keywords", "error": str(exc)}
                )
                continue
            t1 = time.perf_counter()
            try:
                result = generate_qa_for_node(
                    node,
                    keyword_set,
                    prior_questions,
                    chat,
                    banned_phrases=banned_phrases,
                    prior_window=prior_window,
                    temperature=temperature,
                    clock=clock,
                )
            except AnswerBankError as exc:
                errors.append(
                    {"node_id": node.node_id, "stage": "qa", "error": str(exc)}
                )
                continue
            t2 = time.perf_counter()
            qa_pairs.extend(result.pairs)
            prior_questions.extend(pair.question for pair in result.pairs)
            node_entries.append(
                {
                    "node_id": node.node_id,
                    "level": node.level,
                    "keywords": keyword_set.keywords,
                    "keyword_shortfall": keyword_set.shortfall,
                    "qa_count": len(result.pairs),
                    "qa_shortfall": result.shortfall,
                }
            )
            row["qa_pairs"] += len(result.pairs)
            row["nodes"] += 1
            row["keyword_ms"] += (t1 - t0) * 1000.0
            row["qa_ms"] += (t2 - t1) * 1000.0
            row["prompt_tokens"] += chat.usage.prompt_tokens - usage_before[0]
            row["completion_tokens"] += chat.usage.completion_tokens - usage_before[1]

    bank_id = hashlib.sha256(
        json.dumps(
            [sorted(t.doc_id for t in trees), prompts.prompt_hashes()], sort_keys=True
        ).encode("utf-8")
    ).hexdigest()[:16]
    manifest = {
        "bank_id": bank_id,
        "created_at": _iso_utc(clock()),
        "chat_provider": chat.fingerprint,
        "prompt_hashes": prompts.prompt_hashes(),
        "keyword_config": {
            "base": keyword_config.base,
            "step": keyword_config.step,
            "cap": keyword_config.cap,
        },
        "banned_phrases": list(banned_phrases),
        "prior_window": prior_window,
        "nodes": node_entries,
        "errors": errors,
        "ledger": ledger,
        "qa_total": len(qa_pairs),
    }
    return QABank(bank_id=bank_id, qa_pairs=qa_pairs, build_manifest=manifest)


def _iso_utc(timestamp: float) -> str:
    from datetime import datetime, timezone

    return (
        datetime.fromtimestamp(timestamp, tz=timezone.utc)
        .isoformat(timespec="seconds")
        .replace("+00:00", "Z")
    )


def save_bank(bank: QABank, jsonl_path: Path, manifest_path: Path | None = None) -> None:
    lines = []
    for pair in bank.qa_pairs:
        lines.append(
            json.dumps(
                {
                    "qa_id": pair.qa_id,
                    "doc_id": pair.doc_id,
                    "node_id": pair.node_id,
                    "node_level": pair.node_level,
                    "question": pair.question,
                    "answer": pair.answer,
                    "keywords_used": pair.keywords_used,
                    "created_at": pair.created_at,
                },
                ensure_ascii=False,
            )
        )
    jsonl_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    if manifest_path is not None:
        manifest_path.write_text(
            json.dumps(bank.build_manifest, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )


def load_bank(jsonl_path: Path, manifest_path: Path | None = None) -> QABank:
    qa_pairs = []
    seen_ids: set[str] = set()
    with jsonl_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record["qa_id"] in seen_ids:
                raise ValueError(f"{jsonl_path}:{line_no}: duplicate qa_id")
            seen_ids.add(record["qa_id"])
            qa_pairs.append(
                QAPair(
                    qa_id=record["qa_id"],
                    doc_id=record["doc_id"],
                    node_id=record["node_id"],
                    node_level=record["node_level"],
                    question=record["question"],
                    answer=record["answer"],
                    keywords_used=list(record["keywords_used"]),
                    created_at=record["created_at"],
                )
            )
    manifest: dict = {}
    if manifest_path is not None and manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    return QABank(
        bank_id=manifest.get("bank_id", ""), qa_pairs=qa_pairs, build_manifest=manifest
    )
