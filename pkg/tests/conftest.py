"""Shared fixtures: the bundled corpus, a fully built workspace, and the
acceptance summary printed after the run."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from answerbank.cli import main as cli_main
from answerbank.config import AppConfig, load_config
from answerbank.serving import ServingBundle, load_bundle
from answerbank.workspace import Workspace

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

REPO_ROOT = Path(__file__).resolve().parents[1]
CORPUS_DIR = REPO_ROOT / "mock_corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS_DIR


def run_pipeline(ws_root: Path, corpus: Path) -> None:
    """Drive the CLI through every offline stage, asserting success."""
    base = ["-w", str(ws_root), "-c", str(corpus / "config.toml")]
    layout_files = sorted(str(p) for p in corpus.glob("*.layout.json"))
    assert cli_main([*base, "ingest", *layout_files]) == 0
    for command in ("enrich", "chunk", "genqa", "index"):
        assert cli_main([*base, command]) == 0


@pytest.fixture(scope="session")
def built_ws(tmp_path_factory) -> tuple[Workspace, AppConfig]:
    """One pipeline run over the bundled corpus, shared by the session."""
    root = tmp_path_factory.mktemp("ws")
    run_pipeline(root, CORPUS_DIR)
    return Workspace(root), load_config(CORPUS_DIR / "config.toml")


@pytest.fixture
def bundle(built_ws) -> ServingBundle:
    """Fresh providers (zeroed usage counters) over the shared artifacts."""
    ws, config = built_ws
    return load_bundle(ws, config)


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion after the run.
# ---------------------------------------------------------------------------

_RESULTS: dict[str, list[bool]] = {}
_ORDER: list[str] = []


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker:
            name = marker.args[0]
            item.user_properties.append(("criterion", name))
            if name not in _ORDER:
                _ORDER.append(name)


def pytest_runtest_logreport(report):
    for key, name in report.user_properties:
        if key != "criterion":
            continue
        if report.when == "call":
            _RESULTS.setdefault(name, []).append(report.passed)
        elif report.failed:
            _RESULTS.setdefault(name, []).append(False)


def pytest_terminal_summary(terminalreporter):
    if not _ORDER:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in _ORDER:
        outcomes = _RESULTS.get(name, [])
        verdict = "PASS" if outcomes and all(outcomes) else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {name}")
