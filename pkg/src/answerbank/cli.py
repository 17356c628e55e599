"""Workspace-oriented command line driver for the offline pipeline and the
HTTP service.

Commands mirror the pipeline stages (ingest, enrich, chunk, genqa, index)
plus query, eval, and serve. Stages are idempotent: re-running with
unchanged inputs and config prints an "up to date" notice and touches
nothing. Exit codes: 0 ok, 2 usage error, 3 missing or inconsistent
artifact, 4 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .chunking import build_leaves, build_tree, document_stream, load_tree, save_tree
from .config import (
    AppConfig,
    load_config,
    make_chat_provider,
    make_embed_provider,
    stage_config_hash,
)
from .enrich import enrich_document, load_enriched, save_enriched
from .errors import (
    AnswerBankError,
    AuthError,
    ConfigHashMismatch,
    CorruptIndex,
    FingerprintMismatch,
    MissingArtifact,
    ProviderUnavailable,
)
from .evaluation import (
    load_eval_set,
    report_as_dict,
    report_as_table,
    run_eval,
    sweep_as_csv,
    threshold_sweep,
)
from .ingest import parse_layout_file, serialize_document, validate_corpus
from .keywords import KeywordConfig
from .qagen import generate_bank, load_bank, save_bank
from .qaindex import build_index, save_index
from .serving import answer_as_dict, load_bundle
from .workspace import Workspace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_PROVIDER = 4


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_ingest(ws: Workspace, config: AppConfig, args) -> int:
    ws.ensure_layout()
    documents = []
    for name in args.files:
        path = Path(name)
        doc = parse_layout_file(path.read_bytes())
        documents.append(doc)
    doc_ids = [d.doc_id for d in documents]
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError(f"duplicate doc_ids across input files: {doc_ids}")

    outputs, changed = [], 0
    for doc in documents:
        target = ws.layout_dir / f"{doc.doc_id}.json"
        data = serialize_document(doc)
        if not target.exists() or target.read_bytes() != data:
            target.write_bytes(data)
            changed += 1
        outputs.append(target)

    status = ws.read_status("ingest")
    expected = sorted(str(p.relative_to(ws.root)) for p in outputs)
    if (
        changed == 0
        and status is not None
        and status.outputs == expected
        and status.config_hash == stage_config_hash(config, "ingest")
    ):
        _say("ingest: up to date")
        return EXIT_OK

    report = validate_corpus(documents)
    _say(
        f"ingest: {report.documents} documents, {report.pages} pages, "
        f"{report.elements} elements {dict(report.elements_by_kind)}"
    )
    ws.write_status("ingest", stage_config_hash(config, "ingest"), outputs)
    return EXIT_OK


def cmd_enrich(ws: Workspace, config: AppConfig, args) -> int:
    ws.ensure_layout()
    ws.require_stage("ingest", config, args.force)
    if not args.force and ws.is_current("enrich", config):
        _say("enrich: up to date")
        return EXIT_OK
    chat = make_chat_provider(config.chat, config.base_dir)
    outputs = []
    for path in ws.layout_files():
        doc = parse_layout_file(path.read_bytes())
        enriched = enrich_document(doc, chat, max_workers=config.qa.max_parallel)
        target = ws.enriched_dir / f"{doc.doc_id}.json"
        save_enriched(enriched, target)
        outputs.append(target)
        generated = sum(
            1 for e in enriched.elements if e.provenance.value == "generated"
        )
        note = (
            f", {len(enriched.failed_element_ids)} failed"
            if enriched.failed_element_ids
            else ""
        )
        _say(f"enrich: {doc.doc_id}: {generated} descriptions{note}")
    ws.write_status("enrich", stage_config_hash(config, "enrich"), outputs)
    return EXIT_OK


def cmd_chunk(ws: Workspace, config: AppConfig, args) -> int:
    ws.ensure_layout()
    ws.require_stage("enrich", config, args.force)
    if not args.force and ws.is_current("chunk", config):
        _say("chunk: up to date")
        return EXIT_OK
    chat = make_chat_provider(config.chat, config.base_dir)
    outputs = []
    for path in ws.enriched_files():
        doc = load_enriched(path)
        leaves = build_leaves(
            doc.elements,
            target_tokens=config.chunking.max_tokens,
            doc_id=doc.doc_id,
        )
        tree = build_tree(
            leaves,
            fan_out=config.chunking.fan_out,
            chat=chat,
            max_workers=config.qa.max_parallel,
        )
        tree.validate(expected_text=document_stream(doc.elements))
        target = ws.trees_dir / f"{doc.doc_id}.json"
        save_tree(tree, target)
        outputs.append(target)
        _say(
            f"chunk: {doc.doc_id}: {len(leaves)} leaves, height "
            f"{tree.height}, {len(tree.nodes)} nodes"
        )
    ws.write_status("chunk", stage_config_hash(config, "chunk"), outputs)
    return EXIT_OK


def cmd_genqa(ws: Workspace, config: AppConfig, args) -> int:
    ws.ensure_layout()
    ws.require_stage("chunk", config, args.force)
    if not args.force and ws.is_current("genqa", config):
        _say("genqa: up to date")
        return EXIT_OK
    chat = make_chat_provider(config.chat, config.base_dir)
    trees = [load_tree(p) for p in ws.tree_files()]
    doc_domains = {}
    for path in ws.enriched_files():
        doc = load_enriched(path)
        doc_domains[doc.doc_id] = doc.domain_tag or "(untagged)"
    bank = generate_bank(
        trees,
        KeywordConfig(
            base=config.keywords.base,
            step=config.keywords.step,
            cap=config.keywords.cap,
        ),
        chat,
        doc_domains=doc_domains,
        prior_window=config.qa.history_window,
    )
    save_bank(bank, ws.bank_path, ws.manifest_path)
    _say(f"genqa: bank {bank.bank_id}: {len(bank.qa_pairs)} QA pairs")
    ledger = bank.build_manifest["ledger"]
    for domain in sorted(ledger):
        row = ledger[domain]
        _say(
            f"genqa: {domain}: nodes={row['nodes']} qa={row['qa_pairs']} "
            f"tokens={row['prompt_tokens']}+{row['completion_tokens']} "
            f"time={row['keyword_ms'] + row['qa_ms']:.0f}ms"
        )
    errors = bank.build_manifest["errors"]
    if errors:
        _say(f"genqa: {len(errors)} node(s) skipped on provider errors")
    ws.write_status(
        "genqa",
        stage_config_hash(config, "genqa"),
        [ws.bank_path, ws.manifest_path],
    )
    return EXIT_OK


def cmd_index(ws: Workspace, config: AppConfig, args) -> int:
    ws.ensure_layout()
    ws.require_stage("genqa", config, args.force)
    if not args.force and ws.is_current("index", config):
        _say("index: up to date")
        return EXIT_OK
    bank = load_bank(ws.bank_path, ws.manifest_path)
    embed = make_embed_provider(config.embed, config.base_dir)
    index = build_index(bank, embed, batch_size=config.embed.batch_size)
    save_index(index, ws.index_path)
    _say(f"index: {len(index.qa_ids)} questions, dim {index.dim}")
    ws.write_status(
        "index", stage_config_hash(config, "index"), [ws.index_path]
    )
    return EXIT_OK


def cmd_query(ws: Workspace, config: AppConfig, args) -> int:
    if args.threshold is not None and not 0.0 <= args.threshold <= 1.0:
        _say(f"error: threshold {args.threshold} outside [0, 1]")
        return EXIT_USAGE
    bundle = load_bundle(ws, config, force_fingerprint=args.force_fingerprint)
    answer = bundle.answer(args.text, threshold=args.threshold)
    threshold = (
        args.threshold
        if args.threshold is not None
        else bundle.router_config.threshold
    )
    print(json.dumps(answer_as_dict(answer, threshold, bundle.index), indent=2))
    return EXIT_OK


def cmd_eval(ws: Workspace, config: AppConfig, args) -> int:
    dataset = load_eval_set(args.dataset)
    if not dataset:
        _say(f"error: {args.dataset} holds no examples")
        return EXIT_USAGE
    bundle = load_bundle(ws, config, force_fingerprint=args.force_fingerprint)
    report = run_eval(dataset, bundle.answer, parallel=args.parallel)
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    json_path = ws.reports_dir / "eval_report.json"
    table_path = ws.reports_dir / "eval_report.txt"
    table = report_as_table(report)
    json_path.write_text(
        json.dumps(report_as_dict(report), indent=2) + "\n", encoding="utf-8"
    )
    table_path.write_text(table + "\n", encoding="utf-8")
    print(table)
    _say(f"eval: wrote {json_path} and {table_path}")
    if args.sweep:
        try:
            taus = [float(part) for part in args.sweep.split(",") if part.strip()]
        except ValueError:
            _say(f"error: bad --sweep value {args.sweep!r}")
            return EXIT_USAGE
        if len(taus) < 2:
            _say("error: --sweep needs at least 2 thresholds")
            return EXIT_USAGE
        rows = threshold_sweep(
            dataset,
            bundle.index,
            bundle.chunks,
            bundle.embed,
            bundle.chat,
            bundle.router_config,
            taus,
        )
        csv_path = ws.reports_dir / "sweep.csv"
        csv_path.write_text(sweep_as_csv(rows), encoding="utf-8")
        _say(f"eval: wrote {csv_path}")
    return EXIT_OK


def cmd_serve(ws: Workspace, config: AppConfig, args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        _say(f"error: --addr must be host:port, got {args.addr!r}")
        return EXIT_USAGE
    app = create_app(ws, config, force_fingerprint=args.force_fingerprint)
    try:
        uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    except OSError as exc:
        _say(f"error: cannot bind {args.addr}: {exc}")
        return EXIT_USAGE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="answerbank",
        description=(
            "Offline QA pre-generation pipeline and hybrid answering service."
        ),
    )
    parser.add_argument(
        "--workspace",
        "-w",
        default="workspace",
        help="workspace directory (default: ./workspace)",
    )
    parser.add_argument(
        "--config",
        "-c",
        default=None,
        help="config TOML (default: <workspace>/config.toml when present)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate layout files")
    p.add_argument("files", nargs="+", help="layout interchange JSON files")
    p.set_defaults(func=cmd_ingest)

    for name, func, help_text in (
        ("enrich", cmd_enrich, "generate table/figure descriptions"),
        ("chunk", cmd_chunk, "build hierarchical chunk trees"),
        ("genqa", cmd_genqa, "extract keywords and generate the QA bank"),
        ("index", cmd_index, "embed bank questions into the index"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--force", action="store_true",
                       help="rebuild even if up to date")
        p.set_defaults(func=func)

    p = sub.add_parser("query", help="answer one query, JSON to stdout")
    p.add_argument("text")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--force-fingerprint", action="store_true",
                   help="accept an index built by a different embedder")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="run the evaluation harness")
    p.add_argument("dataset", help="JSONL of query/answer/domain rows")
    p.add_argument("--sweep", default=None,
                   help="comma-separated thresholds for a sweep CSV")
    p.add_argument("--parallel", action="store_true",
                   help="parallel quality-only run (no latency reporting)")
    p.add_argument("--force-fingerprint", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--addr", default="127.0.0.1:8080")
    p.add_argument("--force-fingerprint", action="store_true")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ws = Workspace(args.workspace)
    try:
        if args.config is not None:
            config = load_config(args.config)
        elif (ws.root / "config.toml").exists():
            config = load_config(ws.root / "config.toml")
        else:
            config = load_config(None)
        return args.func(ws, config, args)
    except MissingArtifact as exc:
        _say(f"error: {exc}")
        if exc.needed_command:
            _say(f"run first: {exc.needed_command}")
        return EXIT_MISSING
    except (ConfigHashMismatch, FingerprintMismatch, CorruptIndex) as exc:
        _say(f"error: {exc}")
        return EXIT_MISSING
    except (ProviderUnavailable, AuthError) as exc:
        _say(f"error: provider failure: {exc}")
        return EXIT_PROVIDER
    except (AnswerBankError, ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
