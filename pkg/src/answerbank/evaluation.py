"""Evaluation harness: token F1, ROUGE-L, latency aggregation, per-domain
reporting, judge-based QA quality scoring, and threshold sweeps.

F1 is reported multiplied by 100 and ROUGE-L as a 0-1 fraction. ROUGE-L uses
the beta=1 harmonic mean; the choice is recorded in the report so numbers
stay interpretable. Latency is wall-clock at the harness boundary, excluding
dataset I/O.
"""

from __future__ import annotations

import csv
import io
import json
import random
import re
import string
import time
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .errors import Unparseable
from .gateway import ChatProvider, ChatRequest, EmbedProvider, parallel_map
from .prompts import JUDGE_DIMENSIONS, JUDGE_PROMPT_TEMPLATE, JUDGE_SYSTEM_PROMPT
from .qagen import QAPair
from .qaindex import QAIndex
from .router import Answer, AnswerMode, ChunkStore, RouterConfig, answer_query

ROUGE_BETA = 1.0

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(s: str) -> list[str]:
    """Lowercase, strip punctuation, collapse whitespace, split."""
    return s.lower().translate(_PUNCT_TABLE).split()


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length via the classic rolling-row DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def _f_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def token_f1(pred: str, gt: str) -> float:
    """Multiset token overlap F1 in [0, 1]."""
    pred_tokens = normalize_answer(pred)
    gt_tokens = normalize_answer(gt)
    if not pred_tokens and not gt_tokens:
        return 1.0
    if not pred_tokens or not gt_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gt_tokens)).values())
    return _f_score(overlap / len(pred_tokens), overlap / len(gt_tokens))


def rouge_l(pred: str, gt: str) -> float:
    """LCS-based F score over normalized token sequences, beta = 1."""
    pred_tokens = normalize_answer(pred)
    gt_tokens = normalize_answer(gt)
    if not pred_tokens and not gt_tokens:
        return 1.0
    if not pred_tokens or not gt_tokens:
        return 0.0
    lcs = lcs_length(pred_tokens, gt_tokens)
    return _f_score(lcs / len(pred_tokens), lcs / len(gt_tokens))


@dataclass
class EvalExample:
    query: str
    answer: str
    domain: str


def load_eval_set(path: str | Path) -> list[EvalExample]:
    """JSONL of {"query", "answer", "domain"}; ground truth must be
    non-empty."""
    examples = []
    for line_no, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        row = json.loads(line)
        answer = str(row["answer"])
        if not answer.strip():
            raise ValueError(f"{path}:{line_no}: empty ground truth answer")
        examples.append(
            EvalExample(
                query=str(row["query"]),
                answer=answer,
                domain=str(row.get("domain", "default")),
            )
        )
    return examples


@dataclass
class EvalRecord:
    query: str
    ground_truth_answer: str
    domain_tag: str
    system_answer: Answer | None
    f1: float
    rouge_l: float
    latency_ms: float | None
    error: str | None = None


@dataclass
class DomainStats:
    domain: str
    count: int
    f1: float
    rouge_l: float
    latency_s: float | None
    direct_fraction: float
    generated_fraction: float


@dataclass
class EvalReport:
    records: list[EvalRecord]
    domains: dict[str, DomainStats]
    overall: DomainStats
    rouge_beta: float = ROUGE_BETA
    latency_reported: bool = True


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _domain_stats(domain: str, records: Sequence[EvalRecord],
                  latency_reported: bool) -> DomainStats:
    latencies = [r.latency_ms for r in records if r.latency_ms is not None]
    modes = [r.system_answer.mode for r in records if r.system_answer]
    return DomainStats(
        domain=domain,
        count=len(records),
        f1=_mean([r.f1 for r in records]) * 100.0,
        rouge_l=_mean([r.rouge_l for r in records]),
        latency_s=(
            _mean(latencies) / 1000.0
            if latency_reported and latencies else None
        ),
        direct_fraction=(
            sum(m == AnswerMode.DIRECT for m in modes) / len(records)
        ),
        generated_fraction=(
            sum(m == AnswerMode.GENERATED for m in modes) / len(records)
        ),
    )


def run_eval(
    dataset: Sequence[EvalExample],
    system: Callable[[str], Answer],
    parallel: bool = False,
    max_workers: int = 8,
) -> EvalReport:
    """Run the system once per query and aggregate per domain.

    Sequential by default so latency numbers are honest; the parallel mode
    is for quality-only runs and drops latency reporting. Per-record
    failures score 0 with an error note and never abort the run.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")

    def score_one(example: EvalExample) -> EvalRecord:
        start = time.perf_counter()
        try:
            answer = system(example.query)
        except Exception as exc:
            return EvalRecord(
                query=example.query,
                ground_truth_answer=example.answer,
                domain_tag=example.domain,
                system_answer=None,
                f1=0.0,
                rouge_l=0.0,
                latency_ms=(time.perf_counter() - start) * 1000.0,
                error=f"{type(exc).__name__}: {exc}",
            )
        return EvalRecord(
            query=example.query,
            ground_truth_answer=example.answer,
            domain_tag=example.domain,
            system_answer=answer,
            f1=token_f1(answer.text, example.answer),
            rouge_l=rouge_l(answer.text, example.answer),
            latency_ms=(time.perf_counter() - start) * 1000.0,
        )

    if parallel:
        records = parallel_map(score_one, list(dataset), max_workers=max_workers)
        for record in records:
            record.latency_ms = None
    else:
        records = [score_one(example) for example in dataset]

    latency_reported = not parallel
    by_domain: dict[str, list[EvalRecord]] = {}
    for record in records:
        by_domain.setdefault(record.domain_tag, []).append(record)
    domains = {
        domain: _domain_stats(domain, rows, latency_reported)
        for domain, rows in sorted(by_domain.items())
    }
    return EvalReport(
        records=records,
        domains=domains,
        overall=_domain_stats("overall", records, latency_reported),
        latency_reported=latency_reported,
    )


def report_as_dict(report: EvalReport) -> dict:
    def stats_dict(s: DomainStats) -> dict:
        return {
            "count": s.count,
            "f1": round(s.f1, 4),
            "rouge_l": round(s.rouge_l, 6),
            "latency_s": (
                round(s.latency_s, 6) if s.latency_s is not None else None
            ),
            "direct_fraction": round(s.direct_fraction, 6),
            "generated_fraction": round(s.generated_fraction, 6),
        }

    return {
        "rouge_beta": report.rouge_beta,
        "latency_reported": report.latency_reported,
        "overall": stats_dict(report.overall),
        "domains": {d: stats_dict(s) for d, s in report.domains.items()},
        "errors": [
            {"query": r.query, "error": r.error}
            for r in report.records
            if r.error
        ],
    }


def report_as_table(report: EvalReport) -> str:
    """Aligned-column text table, one row per domain plus overall."""
    header = ["domain", "count", "f1", "rouge_l", "latency_s", "direct"]
    rows = [header]
    for stats in list(report.domains.values()) + [report.overall]:
        rows.append([
            stats.domain,
            str(stats.count),
            f"{stats.f1:.2f}",
            f"{stats.rouge_l:.4f}",
            "-" if stats.latency_s is None else f"{stats.latency_s:.4f}",
            f"{stats.direct_fraction:.2f}",
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


@dataclass
class QAQualityScores:
    cqar: float
    answerability: float
    clarity: float
    fluency: float

    def __post_init__(self):
        for name in ("cqar", "answerability", "clarity", "fluency"):
            value = getattr(self, name)
            if not 1.0 <= value <= 5.0:
                raise ValueError(f"{name} score {value} outside [1, 5]")


_SCORE_RE = re.compile(r"-?\d+(?:\.\d+)?")


def _parse_score(text: str) -> float:
    match = _SCORE_RE.search(text)
    if match is None:
        raise Unparseable(f"no score in judge reply {text!r}")
    value = float(match.group())
    if not 1.0 <= value <= 5.0:
        raise Unparseable(f"judge score {value} outside [1, 5]")
    return value


def judge_qa_quality(
    qa: QAPair, context: str, chat: ChatProvider
) -> QAQualityScores:
    """Score one QA pair against its source text on the four dimensions,
    one judging prompt per dimension. Unparseable or out-of-range replies
    are retried once, then raised."""
    if not context.strip():
        raise ValueError("context must be non-empty")
    scores = {}
    for name, (label, definition) in JUDGE_DIMENSIONS.items():
        prompt = JUDGE_PROMPT_TEMPLATE.format(
            dimension=label,
            definition=definition,
            context=context,
            question=qa.question,
            answer=qa.answer,
        )
        last_error: Exception | None = None
        for _ in range(2):
            response = chat.complete(
                ChatRequest(
                    system_prompt=JUDGE_SYSTEM_PROMPT,
                    user_prompt=prompt,
                    temperature=0.0,
                    max_tokens=8,
                )
            )
            try:
                scores[name] = _parse_score(response.text)
                last_error = None
                break
            except Unparseable as exc:
                last_error = exc
        if last_error is not None:
            raise last_error
    return QAQualityScores(**scores)


def judge_sample(
    pairs: Sequence[QAPair],
    context_for: Callable[[QAPair], str],
    chat: ChatProvider,
    sample_size: int | None = None,
    seed: int = 0,
) -> tuple[QAQualityScores, list[QAQualityScores]]:
    """Judge a deterministic sample of pairs and return the per-dimension
    means alongside the individual scores."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    chosen = list(pairs)
    if sample_size is not None and sample_size < len(chosen):
        chosen = random.Random(seed).sample(chosen, sample_size)
    scored = [judge_qa_quality(qa, context_for(qa), chat) for qa in chosen]
    mean = QAQualityScores(
        cqar=_mean([s.cqar for s in scored]),
        answerability=_mean([s.answerability for s in scored]),
        clarity=_mean([s.clarity for s in scored]),
        fluency=_mean([s.fluency for s in scored]),
    )
    return mean, scored


@dataclass
class SweepRow:
    threshold: float
    direct_fraction: float
    f1: float
    latency_ms: float


def threshold_sweep(
    dataset: Sequence[EvalExample],
    index: QAIndex,
    chunks: ChunkStore,
    embed: EmbedProvider,
    chat: ChatProvider,
    base_config: RouterConfig,
    thresholds: Sequence[float],
) -> list[SweepRow]:
    """One full eval run per threshold; rows are plot-ready."""
    if len(thresholds) < 2:
        raise ValueError("sweep needs at least 2 threshold values")
    rows = []
    for tau in thresholds:
        config = replace(base_config, threshold=float(tau))

        def system(query: str) -> Answer:
            return answer_query(query, index, chunks, embed, chat, config)

        report = run_eval(dataset, system)
        rows.append(
            SweepRow(
                threshold=float(tau),
                direct_fraction=report.overall.direct_fraction,
                f1=report.overall.f1,
                latency_ms=(report.overall.latency_s or 0.0) * 1000.0,
            )
        )
    return rows


def sweep_as_csv(rows: Sequence[SweepRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["threshold", "direct_fraction", "f1", "latency_ms"])
    for row in rows:
        writer.writerow([
            f"{row.threshold:g}",
            f"{row.direct_fraction:.6f}",
            f"{row.f1:.4f}",
            f"{row.latency_ms:.3f}",
        ])
    return out.getvalue()
