import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from answerbank.errors import DuplicateOrder, InvalidGeometry, MalformedInput
from answerbank.ingest import (
    ElementKind,
    parse_layout_file,
    serialize_document,
    validate_corpus,
)


def make_doc(elements=None, **overrides):
    doc = {
        "doc_id": "doc-1",
        "source_path": "source/doc-1.pdf",
        "domain_tag": "energy",
        "page_count": 2,
        "elements": elements
        if elements is not None
        else [
            make_element(0),
            make_element(1, kind="table", content="a | b"),
            make_element(2, page=2, kind="figure", content="",
                         image_ref="figures/f.png"),
        ],
    }
    doc.update(overrides)
    return doc


def make_element(order, page=1, kind="text", content="Some text here.",
                 image_ref=None):
    return {
        "element_id": f"e{order}",
        "page": page,
        "order": order,
        "bbox": [10.0, 20.0 + order, 300.0, 40.0 + order],
        "kind": kind,
        "content": content,
        "image_ref": image_ref,
    }


def to_bytes(doc) -> bytes:
    return json.dumps(doc).encode("utf-8")


def test_parse_valid_document():
    doc = parse_layout_file(to_bytes(make_doc()))
    assert doc.doc_id == "doc-1"
    assert doc.domain_tag == "energy"
    assert [e.order for e in doc.elements] == [0, 1, 2]
    assert doc.elements[1].kind is ElementKind.TABLE
    assert doc.elements[2].image_ref == "figures/f.png"


def test_elements_sorted_by_order_not_position():
    elements = [make_element(2, page=2), make_element(0), make_element(1)]
    doc = parse_layout_file(to_bytes(make_doc(elements=elements)))
    assert [e.order for e in doc.elements] == [0, 1, 2]
    assert [e.element_id for e in doc.elements] == ["e0", "e1", "e2"]


def test_not_json_rejected():
    with pytest.raises(MalformedInput):
        parse_layout_file(b"not json at all")
    with pytest.raises(MalformedInput):
        parse_layout_file(b"\xff\xfe broken bytes")
    with pytest.raises(MalformedInput):
        parse_layout_file(b"[1, 2, 3]")


def test_duplicate_order_rejected():
    elements = [make_element(0), make_element(1), make_element(1)]
    elements[2]["element_id"] = "e2"
    with pytest.raises(DuplicateOrder):
        parse_layout_file(to_bytes(make_doc(elements=elements)))


def test_sparse_order_rejected():
    elements = [make_element(0), make_element(2)]
    with pytest.raises(MalformedInput, match="dense"):
        parse_layout_file(to_bytes(make_doc(elements=elements)))


def test_duplicate_element_id_rejected():
    elements = [make_element(0), make_element(1)]
    elements[1]["element_id"] = "e0"
    with pytest.raises(MalformedInput, match="element_id"):
        parse_layout_file(to_bytes(make_doc(elements=elements)))


@pytest.mark.parametrize(
    "bbox",
    [
        [10.0, 20.0, 10.0, 40.0],  # zero width
        [10.0, 40.0, 300.0, 20.0],  # inverted
        [float("nan"), 20.0, 300.0, 40.0],
        [10.0, 20.0, float("inf"), 40.0],
    ],
)
def test_bad_geometry_rejected(bbox):
    element = make_element(0)
    element["bbox"] = bbox
    with pytest.raises(InvalidGeometry):
        parse_layout_file(to_bytes(make_doc(elements=[element])))


def test_bbox_shape_and_type_checked():
    element = make_element(0)
    element["bbox"] = [1.0, 2.0, 3.0]
    with pytest.raises(MalformedInput):
        parse_layout_file(to_bytes(make_doc(elements=[element])))
    element["bbox"] = [1.0, 2.0, "3", 4.0]
    with pytest.raises(MalformedInput):
        parse_layout_file(to_bytes(make_doc(elements=[element])))


def test_text_element_requires_content():
    element = make_element(0, content="   ")
    with pytest.raises(MalformedInput, match="empty content"):
        parse_layout_file(to_bytes(make_doc(elements=[element])))


def test_figure_may_have_empty_content():
    element = make_element(0, kind="figure", content="",
                           image_ref="figures/f.png")
    doc = parse_layout_file(to_bytes(make_doc(elements=[element])))
    assert doc.elements[0].content == ""


def test_page_beyond_page_count_rejected():
    element = make_element(0, page=3)
    with pytest.raises(MalformedInput, match="page_count"):
        parse_layout_file(to_bytes(make_doc(elements=[element])))


def test_unknown_kind_rejected():
    element = make_element(0)
    element["kind"] = "chart"
    with pytest.raises(MalformedInput, match="kind"):
        parse_layout_file(to_bytes(make_doc(elements=[element])))


def test_serialize_is_fixpoint():
    doc = parse_layout_file(to_bytes(make_doc()))
    first = serialize_document(doc)
    again = serialize_document(parse_layout_file(first))
    assert first == again


_content = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
).filter(lambda s: s.strip())


@st.composite
def layout_docs(draw):
    n = draw(st.integers(min_value=1, max_value=6))
    elements = []
    for order in range(n):
        kind = draw(st.sampled_from(["text", "table", "figure"]))
        content = draw(_content)
        elements.append(
            {
                "element_id": f"e{order}",
                "page": draw(st.integers(min_value=1, max_value=3)),
                "order": order,
                "bbox": [0.0, float(order), 10.0, float(order) + 1.0],
                "kind": kind,
                "content": content,
                "image_ref": "img.png" if kind == "figure" else None,
            }
        )
    return {
        "doc_id": draw(st.from_regex(r"[a-z][a-z0-9-]{0,10}", fullmatch=True)),
        "source_path": "src.pdf",
        "domain_tag": draw(st.one_of(st.none(), st.just("tag"))),
        "page_count": 3,
        "elements": elements,
    }


@given(layout_docs())
def test_roundtrip_property(doc):
    parsed = parse_layout_file(to_bytes(doc))
    reparsed = parse_layout_file(serialize_document(parsed))
    assert reparsed == parsed


def test_validate_corpus_tallies():
    docs = [
        parse_layout_file(to_bytes(make_doc())),
        parse_layout_file(
            to_bytes(make_doc(doc_id="doc-2", domain_tag=None, page_count=5))
        ),
    ]
    report = validate_corpus(docs)
    assert report.documents == 2
    assert report.pages == 7
    assert report.elements == 6
    assert report.elements_by_kind == {"text": 2, "table": 2, "figure": 2}
    assert report.by_domain["energy"]["documents"] == 1
    assert report.by_domain["(untagged)"]["pages"] == 5
