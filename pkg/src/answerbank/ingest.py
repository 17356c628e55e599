"""Parsing and validation of layout-analysis interchange files.

One ``.layout.json`` file describes one source document: an ordered stream of
text/table/figure elements with page, bounding box, and reading-order
metadata. Layout detection and OCR themselves happen upstream in external
tooling; this module only validates and normalizes their output. Invalid
geometry or ordering is rejected, never repaired, and the reading order is
always taken from the ``order`` field rather than re-derived from coordinates.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .errors import DuplicateOrder, InvalidGeometry, MalformedInput

LAYOUT_SUFFIX = ".layout.json"


class ElementKind(str, Enum):
    TEXT = "text"
    TABLE = "table"
    FIGURE = "figure"


@dataclass
class LayoutElement:
    element_id: str
    doc_id: str
    page: int
    bbox: tuple[float, float, float, float]
    order: int
    kind: ElementKind
    content: str
    image_ref: str | None = None


@dataclass
class ParsedDocument:
    doc_id: str
    source_path: str
    domain_tag: str | None
    page_count: int
    elements: list[LayoutElement]


@dataclass
class CorpusReport:
    documents: int = 0
    pages: int = 0
    elements: int = 0
    elements_by_kind: dict[str, int] = field(default_factory=dict)
    by_domain: dict[str, dict[str, int]] = field(default_factory=dict)


def parse_layout_file(raw: bytes) -> ParsedDocument:
    """Parse interchange bytes into a validated ParsedDocument.

    Elements come back sorted by their reading-order index. Raises
    MalformedInput / InvalidGeometry / DuplicateOrder instead of repairing.
    """
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedInput("top level must be a JSON object")

    doc_id = _require_str(data, "doc_id")
    source_path = _require_str(data, "source_path", allow_empty=True)
    domain_tag = data.get("domain_tag")
    if domain_tag is not None and not isinstance(domain_tag, str):
        raise MalformedInput("domain_tag must be a string or null")
    page_count = _require_int(data, "page_count", minimum=1)
    raw_elements = data.get("elements")
    if not isinstance(raw_elements, list):
        raise MalformedInput("elements must be a list")

    elements = [
        _parse_element(entry, doc_id, page_count, position)
        for position, entry in enumerate(raw_elements)
    ]

    seen_ids = Counter(e.element_id for e in elements)
    dup_ids = [eid for eid, n in seen_ids.items() if n > 1]
    if dup_ids:
        raise MalformedInput(f"duplicate element_id values: {dup_ids}")

    orders = Counter(e.order for e in elements)
    dup_orders = [order for order, n in orders.items() if n > 1]
    if dup_orders:
        raise DuplicateOrder(f"duplicate order indices: {sorted(dup_orders)}")
    elements.sort(key=lambda e: e.order)
    if [e.order for e in elements] != list(range(len(elements))):
        raise MalformedInput(
            f"order indices must be dense 0..{len(elements) - 1} after sorting"
        )
    return ParsedDocument(
        doc_id=doc_id,
        source_path=source_path,
        domain_tag=domain_tag,
        page_count=page_count,
        elements=elements,
    )


def _parse_element(
    entry: object, doc_id: str, page_count: int, position: int
) -> LayoutElement:
    where = f"elements[{position}]"
    if not isinstance(entry, dict):
        raise MalformedInput(f"{where}: must be an object")
    element_id = _require_str(entry, "element_id", where)
    page = _require_int(entry, "page", where, minimum=1)
    if page > page_count:
        raise MalformedInput(f"{where}: page {page} exceeds page_count {page_count}")
    order = _require_int(entry, "order", where, minimum=0)
    bbox = _parse_bbox(entry.get("bbox"), where)
    kind_raw = entry.get("kind")
    try:
        kind = ElementKind(kind_raw)
    except ValueError:
        raise MalformedInput(f"{where}: unknown kind {kind_raw!r}") from None
    content = entry.get("content")
    if not isinstance(content, str):
        raise MalformedInput(f"{where}: content must be a string")
    if kind is ElementKind.TEXT and not content.strip():
        raise MalformedInput(f"{where}: text element has empty content")
    image_ref = entry.get("image_ref")
    if image_ref is not None and not isinstance(image_ref, str):
        raise MalformedInput(f"{where}: image_ref must be a string or null")
    return LayoutElement(
        element_id=element_id,
        doc_id=doc_id,
        page=page,
        bbox=bbox,
        order=order,
        kind=kind,
        content=content,
        image_ref=image_ref,
    )


def _parse_bbox(value: object, where: str) -> tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise MalformedInput(f"{where}: bbox must be a list of 4 numbers")
    coords = []
    for coord in value:
        if isinstance(coord, bool) or not isinstance(coord, (int, float)):
            raise MalformedInput(f"{where}: bbox entries must be numbers")
        coords.append(float(coord))
    x0, y0, x1, y1 = coords
    if not all(math.isfinite(c) for c in coords):
        raise InvalidGeometry(f"{where}: bbox has non-finite coordinates")
    if not (x0 < x1 and y0 < y1):
        raise InvalidGeometry(f"{where}: degenerate bbox {coords}")
    return (x0, y0, x1, y1)


def _require_str(data: dict, key: str, where: str = "", allow_empty: bool = False) -> str:
    prefix = f"{where}: " if where else ""
    value = data.get(key)
    if not isinstance(value, str):
        raise MalformedInput(f"{prefix}{key} must be a string")
    if not allow_empty and not value:
        raise MalformedInput(f"{prefix}{key} must be non-empty")
    return value


def _require_int(data: dict, key: str, where: str = "", minimum: int = 0) -> int:
    prefix = f"{where}: " if where else ""
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedInput(f"{prefix}{key} must be an integer")
    if value < minimum:
        raise MalformedInput(f"{prefix}{key} must be >= {minimum}")
    return value


def serialize_document(doc: ParsedDocument) -> bytes:
    """Canonical interchange serialization: parse → serialize is a fixpoint."""
    payload = {
        "doc_id": doc.doc_id,
        "source_path": doc.source_path,
        "domain_tag": doc.domain_tag,
        "page_count": doc.page_count,
        "elements": [
            {
                "element_id": e.element_id,
                "page": e.page,
                "order": e.order,
                "bbox": [float(c) for c in e.bbox],
                "kind": e.kind.value,
                "content": e.content,
                "image_ref": e.image_ref,
            }
            for e in sorted(doc.elements, key=lambda e: e.order)
        ],
    }
    return (json.dumps(payload, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def validate_corpus(documents: list[ParsedDocument]) -> CorpusReport:
    """Tally documents/pages/elements per kind and per domain tag."""
    report = CorpusReport(elements_by_kind={k.value: 0 for k in ElementKind})
    for doc in documents:
        report.documents += 1
        report.pages += doc.page_count
        report.elements += len(doc.elements)
        domain = doc.domain_tag or "(untagged)"
        bucket = report.by_domain.setdefault(
            domain, {"documents": 0, "pages": 0, "elements": 0}
        )
        bucket["documents"] += 1
        bucket["pages"] += doc.page_count
        bucket["elements"] += len(doc.elements)
        for element in doc.elements:
            report.elements_by_kind[element.kind.value] += 1
    return report
