import hashlib
from pathlib import Path

import pytest

from answerbank import prompts

GOLDEN_DIR = Path(__file__).parent / "golden"

GOLDEN_PAIRS = [
    ("description_prompt.txt", prompts.DESCRIPTION_PROMPT),
    ("qa_generation_prompt.txt", prompts.QA_GENERATION_PROMPT),
    ("qa_system_prompt.txt", prompts.QA_SYSTEM_PROMPT),
]


@pytest.mark.parametrize(("filename", "text"), GOLDEN_PAIRS)
def test_prompt_matches_golden_hash(filename, text):
    golden = (GOLDEN_DIR / filename).read_bytes()
    assert hashlib.sha256(text.encode("utf-8")).hexdigest() == hashlib.sha256(
        golden
    ).hexdigest()


@pytest.mark.parametrize(("filename", "text"), GOLDEN_PAIRS)
def test_prompt_matches_golden_bytes(filename, text):
    assert text.encode("utf-8") == (GOLDEN_DIR / filename).read_bytes()


def test_qa_generation_unicode_quotes_preserved():
    # The generation-criteria text uses typographic apostrophes in two spots
    # and straight quotes around the banned-phrase example; any normalization
    # during editing would silently change the prompt identity.
    assert prompts.QA_GENERATION_PROMPT.count("’") == 3
    assert "’in the document’" in prompts.QA_GENERATION_PROMPT
    assert 'page’s content' in prompts.QA_GENERATION_PROMPT
    assert '"according to the document"' in prompts.QA_GENERATION_PROMPT


def test_qa_system_en_dash_preserved():
    assert "question–answer" in prompts.QA_SYSTEM_PROMPT


def test_prompt_hashes_cover_all_stages():
    hashes = prompts.prompt_hashes()
    assert set(hashes) == {
        "description", "qa_generation", "qa_system", "qa_few_shot",
        "summary", "keywords", "generation_template", "judge_template",
    }
    assert all(len(h) == 64 for h in hashes.values())
    assert len(set(hashes.values())) == len(hashes)


def test_generation_template_placeholder():
    rendered = prompts.GENERATION_PROMPT_TEMPLATE.format(
        not_answerable="NO ANSWER"
    )
    assert rendered.endswith("reply exactly: NO ANSWER")
    assert "{not_answerable}" not in rendered


def test_judge_template_placeholders():
    rendered = prompts.JUDGE_PROMPT_TEMPLATE.format(
        dimension="Clarity", definition="how clear it is",
        context="ctx", question="Q?", answer="A.",
    )
    for fragment in ("Clarity", "how clear it is", "ctx", "Q?", "A."):
        assert fragment in rendered


def test_judge_dimensions_complete():
    assert list(prompts.JUDGE_DIMENSIONS) == [
        "cqar", "answerability", "clarity", "fluency"
    ]
    for label, definition in prompts.JUDGE_DIMENSIONS.values():
        assert label and definition
