"""Workspace layout and stage bookkeeping for the offline pipeline.

Artifacts live under one root directory:

    layout/    parsed documents (ingest)
    enriched/  description-enriched documents (enrich)
    trees/     chunk trees (chunk)
    bank.jsonl, bank.manifest.json   QA bank (genqa)
    bank.index                        embedding index (index)
    reports/   eval reports and sweeps
    status/    per-stage completion records

Each stage records the config hash and an input fingerprint when it
completes. A stage is up to date when both still match, which is what makes
re-running the CLI a no-op; downstream stages refuse upstream artifacts
whose config hash changed unless forced.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .config import AppConfig, stage_config_hash
from .errors import ConfigHashMismatch, MissingArtifact

STAGE_ORDER = ["ingest", "enrich", "chunk", "genqa", "index"]

# Command the operator must run to produce a stage's artifacts.
STAGE_COMMAND = {
    "ingest": "answerbank ingest <layout files>",
    "enrich": "answerbank enrich",
    "chunk": "answerbank chunk",
    "genqa": "answerbank genqa",
    "index": "answerbank index",
}


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class StageStatus:
    stage: str
    config_hash: str
    input_fingerprint: str
    completed_at: str
    outputs: list[str]


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.layout_dir = self.root / "layout"
        self.enriched_dir = self.root / "enriched"
        self.trees_dir = self.root / "trees"
        self.reports_dir = self.root / "reports"
        self.status_dir = self.root / "status"
        self.bank_path = self.root / "bank.jsonl"
        self.manifest_path = self.root / "bank.manifest.json"
        self.index_path = self.root / "bank.index"

    def ensure_layout(self) -> None:
        for directory in (
            self.root,
            self.layout_dir,
            self.enriched_dir,
            self.trees_dir,
            self.reports_dir,
            self.status_dir,
        ):
            directory.mkdir(parents=True, exist_ok=True)

    def layout_files(self) -> list[Path]:
        return sorted(self.layout_dir.glob("*.json"))

    def enriched_files(self) -> list[Path]:
        return sorted(self.enriched_dir.glob("*.json"))

    def tree_files(self) -> list[Path]:
        return sorted(self.trees_dir.glob("*.json"))

    def fingerprint_files(self, paths: list[Path]) -> str:
        digest = hashlib.sha256()
        for path in sorted(paths):
            digest.update(path.name.encode("utf-8"))
            digest.update(b"\0")
            digest.update(file_sha256(path).encode("ascii"))
            digest.update(b"\0")
        return digest.hexdigest()[:16]

    def stage_inputs(self, stage: str) -> list[Path]:
        """Files a stage reads; the fingerprint over them detects upstream
        edits even when status files claim completion."""
        if stage == "ingest":
            return []
        if stage == "enrich":
            return self.layout_files()
        if stage == "chunk":
            return self.enriched_files()
        if stage == "genqa":
            return self.tree_files()
        if stage == "index":
            return [p for p in (self.bank_path,) if p.exists()]
        raise ValueError(f"unknown stage {stage!r}")

    def status_path(self, stage: str) -> Path:
        return self.status_dir / f"{stage}.json"

    def read_status(self, stage: str) -> StageStatus | None:
        path = self.status_path(stage)
        if not path.exists():
            return None
        raw = json.loads(path.read_text(encoding="utf-8"))
        return StageStatus(
            stage=raw["stage"],
            config_hash=raw["config_hash"],
            input_fingerprint=raw["input_fingerprint"],
            completed_at=raw["completed_at"],
            outputs=list(raw["outputs"]),
        )

    def write_status(
        self, stage: str, config_hash: str, outputs: list[Path]
    ) -> StageStatus:
        status = StageStatus(
            stage=stage,
            config_hash=config_hash,
            input_fingerprint=self.fingerprint_files(self.stage_inputs(stage)),
            completed_at=datetime.now(timezone.utc).isoformat(),
            outputs=sorted(str(p.relative_to(self.root)) for p in outputs),
        )
        self.status_dir.mkdir(parents=True, exist_ok=True)
        self.status_path(stage).write_text(
            json.dumps(status.__dict__, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return status

    def is_current(self, stage: str, config: AppConfig) -> bool:
        """True when the stage completed under the current config and its
        inputs have not changed since."""
        status = self.read_status(stage)
        if status is None:
            return False
        if status.config_hash != stage_config_hash(config, stage):
            return False
        if status.input_fingerprint != self.fingerprint_files(
            self.stage_inputs(stage)
        ):
            return False
        return all((self.root / name).exists() for name in status.outputs)

    def require_stage(
        self, stage: str, config: AppConfig, force: bool = False
    ) -> StageStatus:
        """Assert an upstream stage has run; config mismatches are fatal
        unless forced."""
        status = self.read_status(stage)
        if status is None or not all(
            (self.root / name).exists() for name in status.outputs
        ):
            raise MissingArtifact(
                f"stage {stage!r} has not been run in {self.root}",
                needed_command=STAGE_COMMAND[stage],
            )
        if not force and status.config_hash != stage_config_hash(config, stage):
            raise ConfigHashMismatch(
                f"stage {stage!r} artifacts were built under config hash "
                f"{status.config_hash}, current is "
                f"{stage_config_hash(config, stage)}; rerun "
                f"`{STAGE_COMMAND[stage]}` or pass --force"
            )
        return status
