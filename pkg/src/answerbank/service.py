"""HTTP service over a loaded serving bundle.

The bundle (index, chunk store, providers, router config) is held immutably
in memory; POST /v1/reload builds a fresh bundle and swaps it in atomically,
keeping the old one on failure. The service itself never runs pipeline
stages. Request validation is manual so error bodies stay plain
``{"error": ...}`` JSON.
"""

from __future__ import annotations

import os
import threading
from dataclasses import asdict
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .config import AppConfig
from .errors import AnswerBankError, AuthError, ProviderUnavailable
from .serving import ServingBundle, answer_as_dict, load_bundle, node_sources
from .workspace import Workspace


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def _ui_dist_dir() -> Path | None:
    override = os.environ.get("HYBRIDRAG_UI_DIR")
    if override:
        path = Path(override)
        return path if path.is_dir() else None
    for base in (Path.cwd(), *Path(__file__).resolve().parents):
        candidate = base / "frontend" / "dist"
        if (candidate / "index.html").is_file():
            return candidate
    return None


def create_app(
    workspace: Workspace,
    config: AppConfig,
    force_fingerprint: bool = False,
) -> FastAPI:
    app = FastAPI(title="answerbank")
    lock = threading.Lock()
    state: dict[str, ServingBundle | None] = {"bundle": None}

    def reload_bundle() -> str | None:
        """Swap in a fresh bundle; on failure keep the old one and return
        the error text."""
        try:
            fresh = load_bundle(workspace, config, force_fingerprint)
        except (AnswerBankError, OSError, ValueError) as exc:
            return f"{type(exc).__name__}: {exc}"
        with lock:
            state["bundle"] = fresh
        return None

    # The service may start before the pipeline has run; /v1/query then
    # answers 503 until a reload succeeds.
    app.state.startup_error = reload_bundle()

    def current() -> ServingBundle | None:
        with lock:
            return state["bundle"]

    @app.post("/v1/query")
    async def query(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        if not isinstance(payload, dict):
            return _error(400, "body must be a JSON object")
        query_text = payload.get("query")
        if not isinstance(query_text, str) or not query_text.strip():
            return _error(400, "query must be a non-empty string")
        threshold = payload.get("threshold")
        if threshold is not None:
            if isinstance(threshold, bool) or not isinstance(
                threshold, (int, float)
            ):
                return _error(400, "threshold must be a number")
            threshold = float(threshold)
            if not 0.0 <= threshold <= 1.0:
                return _error(400, f"threshold {threshold} outside [0, 1]")
        bundle = current()
        if bundle is None:
            return _error(503, "index not loaded")
        try:
            answer = bundle.answer(query_text, threshold=threshold)
        except (ProviderUnavailable, AuthError) as exc:
            return _error(502, f"provider failure: {exc}")
        effective = (
            threshold if threshold is not None
            else bundle.router_config.threshold
        )
        return JSONResponse(answer_as_dict(answer, effective, bundle.index))

    @app.get("/v1/health")
    async def health():
        bundle = current()
        return JSONResponse(
            {
                "status": "ok",
                "index_size": len(bundle.index.qa_ids) if bundle else 0,
                "bank_size": bundle.bank_size if bundle else 0,
            }
        )

    @app.get("/v1/config")
    async def get_config():
        bundle = current()
        if bundle is None:
            return _error(503, "index not loaded")
        return JSONResponse(asdict(bundle.router_config))

    @app.get("/v1/sources/{node_id:path}")
    async def sources(node_id: str):
        bundle = current()
        if bundle is None:
            return _error(503, "index not loaded")
        if node_id not in bundle.chunks:
            return _error(404, f"unknown node {node_id}")
        node = bundle.chunks.get(node_id)
        return JSONResponse(
            {
                "node_id": node.node_id,
                "doc_id": node.doc_id,
                "level": node.level,
                "is_leaf": node.is_leaf,
                "token_count": node.token_count,
                "text": node.text,
                "elements": node_sources(bundle, node),
            }
        )

    @app.post("/v1/reload")
    async def reload():
        error = reload_bundle()
        if error is not None:
            return _error(503, error)
        bundle = current()
        assert bundle is not None
        return JSONResponse(
            {
                "status": "ok",
                "index_size": len(bundle.index.qa_ids),
                "bank_size": bundle.bank_size,
            }
        )

    ui_dir = _ui_dist_dir()
    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
