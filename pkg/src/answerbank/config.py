"""Configuration: TOML file with sectioned settings, environment overrides,
provider factories, and per-stage config hashes.

Environment variables with the ``HYBRIDRAG_`` prefix override scalar keys,
e.g. ``HYBRIDRAG_ROUTER_THRESHOLD=0.8`` or
``HYBRIDRAG_PROVIDERS_CHAT_KIND=http``. Stage hashes cover only the sections
a stage actually reads, so tuning the router never invalidates the QA bank.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gateway import (
    ChatProvider,
    EmbedProvider,
    HttpChatProvider,
    HttpEmbedProvider,
    MockChatProvider,
    MockEmbedProvider,
)
from .prompts import prompt_hashes

ENV_PREFIX = "HYBRIDRAG_"


@dataclass
class ProviderSettings:
    kind: str = "mock"
    seed: int = 0
    script: str = ""
    delay_ms: float = 0.0
    dim: int = 256
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout_ms: float = 60_000.0
    max_in_flight: int = 8
    max_retries: int = 3
    batch_size: int = 64

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValueError(f"provider kind {self.kind!r} not mock or http")
        if self.kind == "http" and not self.base_url:
            raise ValueError("http provider requires base_url")


@dataclass
class ChunkingSettings:
    max_tokens: int = 256
    fan_out: int = 5

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("chunking.max_tokens must be >= 1")
        if self.fan_out < 2:
            raise ValueError("chunking.fan_out must be >= 2")


@dataclass
class KeywordSettings:
    base: int = 3
    step: int = 2
    cap: int = 10


@dataclass
class QASettings:
    history_window: int = 20
    max_parallel: int = 8


@dataclass
class RouterSettings:
    threshold: float = 0.9
    top_k: int = 3
    max_context_tokens: int = 4096
    not_answerable: str = "Not answerable"
    generation_temperature: float = 0.2
    generation_max_tokens: int = 512


@dataclass
class EvalSettings:
    sample_seed: int = 0
    judge_sample_size: int = 20


@dataclass
class AppConfig:
    chat: ProviderSettings = field(default_factory=ProviderSettings)
    embed: ProviderSettings = field(default_factory=ProviderSettings)
    judge: ProviderSettings | None = None
    chunking: ChunkingSettings = field(default_factory=ChunkingSettings)
    keywords: KeywordSettings = field(default_factory=KeywordSettings)
    qa: QASettings = field(default_factory=QASettings)
    router: RouterSettings = field(default_factory=RouterSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    base_dir: Path = field(default_factory=Path.cwd)


def _coerce_env_value(raw: str) -> Any:
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _known_paths() -> dict[str, tuple[str, ...]]:
    """Every settable config path, keyed by its underscore-joined env name.

    Mapping against the schema (rather than splitting the variable name)
    keeps keys that themselves contain underscores, like ``max_tokens``,
    unambiguous: ``HYBRIDRAG_CHUNKING_MAX_TOKENS`` -> chunking.max_tokens.
    """
    paths: dict[str, tuple[str, ...]] = {}
    for section in ("chat", "embed", "judge"):
        for name in ProviderSettings.__dataclass_fields__:
            paths[f"providers_{section}_{name}"] = ("providers", section, name)
    for section, cls in (
        ("chunking", ChunkingSettings),
        ("keywords", KeywordSettings),
        ("qa", QASettings),
        ("router", RouterSettings),
        ("eval", EvalSettings),
    ):
        for name in cls.__dataclass_fields__:
            paths[f"{section}_{name}"] = (section, name)
    return paths


def apply_env_overrides(data: dict, environ: dict[str, str] | None = None) -> dict:
    """Overlay ``HYBRIDRAG_*`` variables onto parsed TOML data.

    Variables that do not name a known config key are left alone; the prefix
    is also used for non-config switches (e.g. the UI directory override).
    """
    env = os.environ if environ is None else environ
    paths = _known_paths()
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        path = paths.get(name[len(ENV_PREFIX):].lower())
        if path is None:
            continue
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = _coerce_env_value(env[name])
    return data


def _build_section(cls, data: dict | None):
    if not data:
        return cls()
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(
            f"unknown keys in [{cls.__name__}]: {', '.join(sorted(unknown))}"
        )
    return cls(**data)


def load_config(
    path: str | Path | None = None,
    environ: dict[str, str] | None = None,
) -> AppConfig:
    """Load the TOML config (all sections optional), then apply environment
    overrides. Relative provider script paths resolve against the config
    file's directory."""
    if path is not None:
        path = Path(path)
        data = tomllib.loads(path.read_text(encoding="utf-8"))
        base_dir = path.resolve().parent
    else:
        data = {}
        base_dir = Path.cwd()
    apply_env_overrides(data, environ)
    providers = data.get("providers", {})
    judge_raw = providers.get("judge")
    return AppConfig(
        chat=_build_section(ProviderSettings, providers.get("chat")),
        embed=_build_section(ProviderSettings, providers.get("embed")),
        judge=(
            _build_section(ProviderSettings, judge_raw)
            if judge_raw is not None
            else None
        ),
        chunking=_build_section(ChunkingSettings, data.get("chunking")),
        keywords=_build_section(KeywordSettings, data.get("keywords")),
        qa=_build_section(QASettings, data.get("qa")),
        router=_build_section(RouterSettings, data.get("router")),
        eval=_build_section(EvalSettings, data.get("eval")),
        base_dir=base_dir,
    )


def make_chat_provider(
    settings: ProviderSettings, base_dir: Path
) -> ChatProvider:
    if settings.kind == "mock":
        script: str | Path | None = None
        if settings.script:
            script = base_dir / settings.script
        return MockChatProvider(
            seed=settings.seed, script=script, delay_ms=settings.delay_ms
        )
    return HttpChatProvider(
        base_url=settings.base_url,
        model=settings.model,
        api_key_env=settings.api_key_env,
        timeout_ms=settings.timeout_ms,
        max_in_flight=settings.max_in_flight,
        max_retries=settings.max_retries,
    )


def make_embed_provider(
    settings: ProviderSettings, base_dir: Path
) -> EmbedProvider:
    if settings.kind == "mock":
        return MockEmbedProvider(seed=settings.seed, dim=settings.dim)
    return HttpEmbedProvider(
        base_url=settings.base_url,
        model=settings.model,
        api_key_env=settings.api_key_env,
        timeout_ms=settings.timeout_ms,
        max_in_flight=settings.max_in_flight,
        max_retries=settings.max_retries,
    )


def make_judge_provider(config: AppConfig) -> ChatProvider:
    settings = config.judge if config.judge is not None else config.chat
    return make_chat_provider(settings, config.base_dir)


def _section_dict(obj) -> dict:
    out = {}
    for name in obj.__dataclass_fields__:
        value = getattr(obj, name)
        out[name] = str(value) if isinstance(value, Path) else value
    return out


# Sections each pipeline stage actually depends on; prompt hashes are mixed
# in where a stage sends prompts, so editing a prompt rebuilds that stage.
_STAGE_INPUTS = {
    "ingest": ((), ()),
    "enrich": (("chat",), ("description",)),
    "chunk": (("chat", "chunking"), ("summary",)),
    "genqa": (
        ("chat", "keywords", "qa"),
        ("keywords", "qa_generation", "qa_system", "qa_few_shot"),
    ),
    "index": (("embed",), ()),
}


def stage_config_hash(config: AppConfig, stage: str) -> str:
    try:
        sections, prompt_keys = _STAGE_INPUTS[stage]
    except KeyError:
        raise ValueError(f"unknown stage {stage!r}") from None
    hashes = prompt_hashes()
    payload = {
        "stage": stage,
        "sections": {
            name: _section_dict(getattr(config, name)) for name in sections
        },
        "prompts": {key: hashes[key] for key in prompt_keys},
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
