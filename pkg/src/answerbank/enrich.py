"""Table/figure description: turn the element stream fully textual.

Text elements pass through untouched; table and figure elements are replaced
by one-paragraph descriptions written by the chat provider. Only the textual
payload (raw content plus kind/page note) is sent, never image bytes, so any
chat endpoint works; vision-capable deployments can extend the provider.
A failed description never sinks the document: the element keeps a placeholder
and is flagged in the job report.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import AnswerBankError, EmptyDescription
from .gateway import ChatProvider, ChatRequest, parallel_map
from .ingest import ElementKind, LayoutElement, ParsedDocument
from .prompts import DESCRIPTION_PROMPT

logger = logging.getLogger(__name__)

PLACEHOLDER_TEXT = "[description unavailable]"
ENRICHED_SUFFIX = ".enriched.json"


class Provenance(str, Enum):
    OCR = "ocr"
    GENERATED = "generated"


@dataclass
class EnrichedElement:
    element_id: str
    kind: ElementKind
    text: str
    provenance: Provenance
    page: int
    order: int
    bbox: tuple[float, float, float, float]


@dataclass
class EnrichedDocument:
    doc_id: str
    source_path: str
    domain_tag: str | None
    page_count: int
    elements: list[EnrichedElement]
    failed_element_ids: list[str]


def strip_markdown(text: str) -> str:
    """Flatten markdown-ish output into a single plain paragraph."""
    text = re.sub(r"```.*?```", " ", text, flags=re.DOTALL)
    text = re.sub(r"`([^`]*)`", r"\1", text)
    text = re.sub(r"!\[([^\]]*)\]\([^)]*\)", r"\1", text)
    text = re.sub(r"\[([^\]]*)\]\([^)]*\)", r"\1", text)
    lines = []
    for line in text.splitlines():
        line = re.sub(r"^\s*#{1,6}\s+", "", line)
        line = re.sub(r"^\s*>\s?", "", line)
        line = re.sub(r"^\s*(?:[-*+]|\d+[.)])\s+", "", line)
        line = re.sub(r"^\s*(?:-{3,}|\*{3,}|_{3,})\s*$", "", line)
        lines.append(line)
    text = " ".join(lines)
    text = re.sub(r"(\*\*|__)(.*?)\1", r"\2", text)
    text = re.sub(r"(?<![\w*])\*([^*\n]+)\*(?![\w*])", r"\1", text)
    text = re.sub(r"(?<![\w_])_([^_\n]+)_(?![\w_])", r"\1", text)
    return " ".join(text.split())


def _element_payload(element: LayoutElement) -> str:
    return (
        f"Element kind: {element.kind.value}\n"
        f"Page: {element.page}\n"
        f"Source content:\n{element.content}\n"
        f"Image reference: {element.image_ref or '(none)'}"
    )


def describe_element(element: LayoutElement, chat: ChatProvider) -> EnrichedElement:
    """Generate the textual description for one table/figure element."""
    if element.kind is ElementKind.TEXT:
        raise ValueError("text elements bypass enrichment")
    if not element.image_ref and not element.content.strip():
        raise ValueError(
            f"element {element.element_id} has neither content nor image_ref"
        )
    response = chat.complete(
        ChatRequest(system_prompt=DESCRIPTION_PROMPT, user_prompt=_element_payload(element))
    )
    text = strip_markdown(response.text)
    if not text:
        raise EmptyDescription(f"blank description for element {element.element_id}")
    return EnrichedElement(
        element_id=element.element_id,
        kind=element.kind,
        text=text,
        provenance=Provenance.GENERATED,
        page=element.page,
        order=element.order,
        bbox=element.bbox,
    )


def enrich_document(
    doc: ParsedDocument, chat: ChatProvider, max_workers: int = 4
) -> EnrichedDocument:
    """Describe every table/figure element; text elements copy through.

    Output has the same length and order as the input. Elements whose
    description fails are kept with a placeholder and listed in
    ``failed_element_ids``.
    """

    def _one(element: LayoutElement) -> tuple[EnrichedElement, bool]:
        if element.kind is ElementKind.TEXT:
            return (
                EnrichedElement(
                    element_id=element.element_id,
                    kind=element.kind,
                    text=element.content,
                    provenance=Provenance.OCR,
                    page=element.page,
                    order=element.order,
                    bbox=element.bbox,
                ),
                False,
            )
        try:
            return describe_element(element, chat), False
        except AnswerBankError as exc:
            logger.warning("description failed for %s: %s", element.element_id, exc)
            return (
                EnrichedElement(
                    element_id=element.element_id,
                    kind=element.kind,
                    text=PLACEHOLDER_TEXT,
                    provenance=Provenance.GENERATED,
                    page=element.page,
                    order=element.order,
                    bbox=element.bbox,
                ),
                True,
            )

    results = parallel_map(_one, doc.elements, max_workers)
    elements = [enriched for enriched, _ in results]
    failed = [e.element_id for e, flagged in results if flagged]
    return EnrichedDocument(
        doc_id=doc.doc_id,
        source_path=doc.source_path,
        domain_tag=doc.domain_tag,
        page_count=doc.page_count,
        elements=elements,
        failed_element_ids=failed,
    )


def save_enriched(doc: EnrichedDocument, path: Path) -> None:
    payload = {
        "doc_id": doc.doc_id,
        "source_path": doc.source_path,
        "domain_tag": doc.domain_tag,
        "page_count": doc.page_count,
        "failed_element_ids": doc.failed_element_ids,
        "elements": [
            {
                "element_id": e.element_id,
                "page": e.page,
                "order": e.order,
                "bbox": [float(c) for c in e.bbox],
                "kind": e.kind.value,
                "content": e.text,
                "image_ref": None,
                "provenance": e.provenance.value,
            }
            for e in doc.elements
        ],
    }
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def load_enriched(path: Path) -> EnrichedDocument:
    data = json.loads(path.read_text(encoding="utf-8"))
    elements = [
        EnrichedElement(
            element_id=e["element_id"],
            kind=ElementKind(e["kind"]),
            text=e["content"],
            provenance=Provenance(e["provenance"]),
            page=e["page"],
            order=e["order"],
            bbox=tuple(float(c) for c in e["bbox"]),
        )
        for e in data["elements"]
    ]
    return EnrichedDocument(
        doc_id=data["doc_id"],
        source_path=data["source_path"],
        domain_tag=data.get("domain_tag"),
        page_count=data["page_count"],
        elements=elements,
        failed_element_ids=list(data.get("failed_element_ids", [])),
    )
