"""Prompt texts shipped with the pipeline.

Every prompt is frozen here so that runs are comparable and the build
manifest can record stable hashes. Tests hash-check the three generation
prompts against golden files; change them only together with the goldens.
"""

import hashlib

# System prompt for turning a table or figure element into running text.
DESCRIPTION_PROMPT = (
    "You are an image description expert who accurately outputs chunk text based on "
    "the information contained in the image. You must analyze the content without "
    "omission, avoid duplication or misinterpretation, and write the result as a "
    "coherent paragraph without any markdown formatting or external commentary."
)

# System prompt framing the QA-pair generation task and its question criteria.
QA_GENERATION_PROMPT = (
    "You are an AI specialized in generating QAs from documents. Your mission is to "
    "analyze the document, follow the instructions, and generate RAG-style "
    "question-answer pairs based on the document.\n"
    "RAG-style refers to a question that needs to be answered by retrieving relevant "
    "context from an external document based on the question, so the question MUST "
    "obey the following criteria:\n"
    "1. Question should represent a plausible inquiry that a person (who has not seen "
    "the page) might ask about the information uniquely presented on this page. The "
    "questions should not reference this specific page directly (by page number, "
    "pointing to a specific paragraph or figure, and never refer to the document "
    "using phrases like ’in the document’), nor should they quote the text "
    "verbatim. They should use natural language reflecting how someone might inquire "
    "about the page’s content without direct access.\n"
    "2. Question must contain all information and context/background necessary to "
    "answer without the document. Do not include phrases like \"according to the "
    "document\" in the question.\n"
    "3. Question must not contain any ambiguous references, such as 'he', 'she', "
    "'it', 'the report', 'the paper', and 'the document'. You MUST use their "
    "complete names."
)

# Instruction block appended after the interpolated node text and keywords.
QA_SYSTEM_PROMPT = (
    "- Instruction:\n"
    "1. Analyze the text above and the given keywords.\n"
    "2. Create new, meaningful question–answer pairs that a user might naturally "
    "ask about this text.\n"
    "3. Do not duplicate any previously generated Q&A.\n"
    "4. Only generate questions that can be answered explicitly by the text.\n"
    "5. Provide concise, direct answers without extra elaboration.\n"
    "\n"
    "The answer form should be as diverse as possible, including "
    "[Yes/No, Numeric, String, List].\n"
    "\n"
    "- Output format:\n"
    "Question:\n"
    "Answer:"
)

# Worked example embedded in every QA generation request.
QA_FEW_SHOT_EXAMPLE = (
    "### text:\n"
    "\"With direct access to human-written reference as memory, retrieval-augmented "
    "generation has achieved much progress in various text generation tasks. In this "
    "framework, better memory typically leads to better generation (the 'primal "
    "problem'). The proposed Selfmem approach leverages an iterative memory to "
    "improve performance.\"\n"
    "### keywords: [\"retrieval-augmented generation\", \"primal problem\", \"Selfmem\"]\n"
    "(Reasoning steps)\n"
    "1. Identify main content: retrieval-augmented approach, concept of 'better "
    "memory => better generation'\n"
    "2. Form a question about what tasks or idea the snippet highlights\n"
    "3. The answer must be directly found in the snippet\n"
    "Question: What core idea does the Selfmem framework build upon?\n"
    "Answer: It uses an iterative memory mechanism, where better generation leads to "
    "better memory, improving overall performance."
)

# System prompt for summarizing child chunks into a parent node.
SUMMARY_PROMPT = (
    "You write faithful abstractive summaries. Summarize the provided text as a "
    "single coherent paragraph of at most 200 words. Preserve the key facts, names, "
    "figures, and relationships stated in the text, and do not introduce any "
    "information that the text does not contain. Output only the summary paragraph."
)

# System prompt for per-node keyword extraction.
KEYWORD_PROMPT = (
    "You extract core keywords from a passage of text. Return exactly the requested "
    "number of distinct keywords, one keyword per line, ordered from most to least "
    "central. Do not number the lines, do not use bullets, and do not add any "
    "commentary."
)

# Fallback-generation system prompt; {not_answerable} is filled from config.
GENERATION_PROMPT_TEMPLATE = (
    "You answer user questions using only the context passages provided with the "
    "question. Answer briefly, with one or two words or a very short sentence, "
    "without additional elaboration. If the context does not contain the information "
    "needed to answer the question, reply exactly: {not_answerable}"
)

# Judge role prompt; the rubric and pair go into the user turn.
JUDGE_SYSTEM_PROMPT = (
    "You are a strict evaluator of question-answer pairs generated from "
    "documents. Rate the pair you are given on one dimension only."
)

# Rubric template for LLM-judge scoring of generated QA pairs.
JUDGE_PROMPT_TEMPLATE = (
    "Dimension: {dimension}, meaning {definition}.\n"
    "\n"
    "Context:\n"
    "{context}\n"
    "\n"
    "Question: {question}\n"
    "Answer: {answer}\n"
    "\n"
    "Use an integer scale from 1 (very poor) to 5 (excellent). "
    "Respond with that single integer and nothing else."
)

JUDGE_DIMENSIONS = {
    "cqar": (
        "Context-Question-Answer Relevance",
        "how well the generated question and answer align contextually with the "
        "source document",
    ),
    "answerability": (
        "Answerability",
        "the extent to which the generated question is answerable given the "
        "provided context",
    ),
    "clarity": (
        "Clarity",
        "the preciseness and unambiguity of the generated question and answer",
    ),
    "fluency": (
        "Fluency",
        "the grammatical correctness and naturalness of the generated text",
    ),
}


def prompt_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def prompt_hashes() -> dict[str, str]:
    """Stable hashes of every shipped prompt, recorded in build manifests."""
    return {
        "description": prompt_sha256(DESCRIPTION_PROMPT),
        "qa_generation": prompt_sha256(QA_GENERATION_PROMPT),
        "qa_system": prompt_sha256(QA_SYSTEM_PROMPT),
        "qa_few_shot": prompt_sha256(QA_FEW_SHOT_EXAMPLE),
        "summary": prompt_sha256(SUMMARY_PROMPT),
        "keywords": prompt_sha256(KEYWORD_PROMPT),
        "generation_template": prompt_sha256(GENERATION_PROMPT_TEMPLATE),
        "judge_template": prompt_sha256(JUDGE_PROMPT_TEMPLATE),
    }
