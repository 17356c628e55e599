"""Provider gateway: chat completion and text embedding.

Everything downstream talks to providers through the two small contracts
defined here (``ChatProvider`` / ``EmbedProvider``). Real deployments use the
HTTP providers against any chat-completions-compatible endpoint; tests and the
bundled corpus use the deterministic mocks, which synthesize content-dependent
responses so the full pipeline runs offline.

All embedding vectors are L2-normalized before they leave the gateway, so the
inner product downstream is a cosine similarity and the routing threshold has
a provider-independent meaning.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from . import prompts
from .errors import (
    AuthError,
    DimMismatch,
    ProviderUnavailable,
    ResponseTooLong,
    ZeroVector,
)

DEFAULT_EMBED_DIM = 256
DEFAULT_MAX_IN_FLIGHT = 4
DEFAULT_MAX_RETRIES = 3


@dataclass
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.2
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.system_prompt.strip():
            raise ValueError("system_prompt must be non-empty")
        if not self.user_prompt.strip():
            raise ValueError("user_prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


@dataclass
class ProviderUsage:
    """Cumulative usage counters, updated atomically by each provider."""

    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, prompt_tokens: int, completion_tokens: int) -> None:
        with self._lock:
            self.calls += 1
            self.prompt_tokens += prompt_tokens
            self.completion_tokens += completion_tokens


class ChatProvider(Protocol):
    usage: ProviderUsage

    @property
    def fingerprint(self) -> str: ...

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class EmbedProvider(Protocol):
    usage: ProviderUsage

    @property
    def dim(self) -> int: ...

    @property
    def fingerprint(self) -> str: ...

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


# ---------------------------------------------------------------------------
# Vector helpers
# ---------------------------------------------------------------------------


def normalize_vector(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit L2 norm (float64). Raises ZeroVector on ‖v‖ = 0."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVector("cannot normalize a zero or non-finite vector")
    return v / norm


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def _approx_tokens(text: str) -> int:
    return len(text.split())


def parallel_map(fn: Callable, items: Sequence, max_workers: int) -> list:
    """Apply fn to items, possibly concurrently; results keep item order.

    Exceptions propagate from whichever item raised first by position, which
    keeps failure behavior identical to the sequential path.
    """
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------


def _stable_digest(seed: int, *parts: str) -> int:
    h = hashlib.blake2b(digest_size=8, key=seed.to_bytes(8, "little", signed=True))
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def _load_script(script: dict | str | Path | None) -> dict:
    if script is None:
        return {}
    if isinstance(script, (str, Path)):
        return json.loads(Path(script).read_text(encoding="utf-8"))
    return dict(script)


class MockChatProvider:
    """Offline chat provider: a pure function of (seed, script, request).

    Responses are resolved in order:
      1. script entry whose key equals the user prompt exactly,
      2. script entry ``contains:<substring>`` matching the user prompt
         (checked in sorted key order),
      3. a task-specific synthesizer keyed off the system prompt, so the whole
         pipeline (descriptions, summaries, keywords, QA pairs, judging,
         fallback generation) works without any scripting.

    Script values are either a response string or ``{"error": "..."}`` to
    simulate a provider failure for matching prompts.
    """

    def __init__(
        self,
        seed: int = 0,
        script: dict | str | Path | None = None,
        delay_ms: float = 0.0,
    ):
        self.seed = seed
        self.script = _load_script(script)
        self.delay_ms = delay_ms
        self.usage = ProviderUsage()
        self._contains_keys = sorted(
            k for k in self.script if k.startswith("contains:")
        )

    @property
    def fingerprint(self) -> str:
        return f"mock-chat:seed={self.seed}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        start = time.perf_counter()
        if self.delay_ms > 0:
            time.sleep(self.delay_ms / 1000.0)
        text = self._respond(request)
        latency_ms = (time.perf_counter() - start) * 1000.0
        response = ChatResponse(
            text=text,
            prompt_tokens=_approx_tokens(request.system_prompt)
            + _approx_tokens(request.user_prompt),
            completion_tokens=_approx_tokens(text),
            latency_ms=latency_ms,
        )
        self.usage.record(response.prompt_tokens, response.completion_tokens)
        return response

    # -- resolution ---------------------------------------------------------

    def _respond(self, request: ChatRequest) -> str:
        entry = self.script.get(request.user_prompt)
        if entry is None:
            for key in self._contains_keys:
                if key[len("contains:"):] in request.user_prompt:
                    entry = self.script[key]
                    break
        if entry is not None:
            if isinstance(entry, dict):
                if "error" in entry:
                    raise ProviderUnavailable(f"scripted failure: {entry['error']}")
                return str(entry.get("response", ""))
            return str(entry)
        return self._synthesize(request)

    def _synthesize(self, request: ChatRequest) -> str:
        system = request.system_prompt
        if system == prompts.DESCRIPTION_PROMPT:
            return self._synth_description(request.user_prompt)
        if system == prompts.SUMMARY_PROMPT:
            return self._synth_summary(request.user_prompt)
        if system == prompts.KEYWORD_PROMPT:
            return self._synth_keywords(request.user_prompt)
        if system == prompts.QA_GENERATION_PROMPT:
            return self._synth_qa(request.user_prompt)
        if system.startswith("You are a strict evaluator"):
            return str(1 + _stable_digest(self.seed, "judge", request.user_prompt) % 5)
        if system.startswith("You answer user questions using only the context"):
            return self._synth_generation(request.user_prompt)
        token = _stable_digest(self.seed, system, request.user_prompt)
        return f"mock-response-{token:016x}"

    def _synth_description(self, user_prompt: str) -> str:
        kind = _first_match(r"Element kind: (\w+)", user_prompt, "element")
        page = _first_match(r"Page: (\d+)", user_prompt, "0")
        body = user_prompt.split("Source content:\n", 1)[-1]
        body = body.split("\nImage reference:", 1)[0]
        words = body.split()[:40]
        if not words:
            words = [f"item-{_stable_digest(self.seed, user_prompt) % 1000}"]
        return f"A {kind} on page {page} presenting {' '.join(words)}."

    def _synth_summary(self, user_prompt: str) -> str:
        # The marker keeps a summary textually distinct from its sources even
        # when the source is short enough to fit whole; downstream dedup
        # relies on summaries not being byte-equal to any child text.
        body = user_prompt.split("Summarize the following text:\n\n", 1)[-1]
        sections = len([s for s in body.split("\n\n") if s.strip()])
        return f"Condensed from {sections} passages: " + " ".join(
            body.split()[:56]
        )

    def _synth_keywords(self, user_prompt: str) -> str:
        count = int(_first_match(r"exactly (\d+) keywords", user_prompt, "3"))
        body = user_prompt.split("Passage:\n", 1)[-1]
        words: list[str] = []
        seen: set[str] = set()
        for word in re.findall(r"[A-Za-z][A-Za-z0-9-]{3,}", body):
            folded = word.casefold()
            if folded not in seen:
                seen.add(folded)
                words.append(word)
        while len(words) < count:
            words.append(f"term{len(words) + 1}")
        return "\n".join(words[:count])

    def _synth_qa(self, user_prompt: str) -> str:
        # The few-shot example carries its own "### text:" block, so anchor on
        # the last keywords block, which belongs to the actual node.
        kw_start = user_prompt.rfind("### keywords: [")
        text_start = user_prompt.rfind("### text:\n", 0, kw_start)
        body = user_prompt[text_start + len("### text:\n"): kw_start].strip()
        kw_line = user_prompt[kw_start:].split("\n", 1)[0]
        try:
            keywords = json.loads(kw_line[len("### keywords: "):])
        except json.JSONDecodeError:
            keywords = []
        tokens = body.split()
        tail = " ".join(tokens[-4:])
        blocks = []
        for kw in keywords:
            question = (
                f"What does the passage of {len(tokens)} words closing with "
                f"'{tail}' state about {kw}?"
            )
            blocks.append(f"Question: {question}\nAnswer: {self._answer_for(kw, tokens)}")
        return "\n\n".join(blocks)

    def _answer_for(self, keyword: str, tokens: list[str]) -> str:
        folded = keyword.casefold()
        for i, token in enumerate(tokens):
            if folded in token.casefold():
                return " ".join(tokens[i: i + 10]) + "."
        return " ".join(tokens[:8]) + "."

    def _synth_generation(self, user_prompt: str) -> str:
        context = user_prompt.split("Context:\n", 1)[-1]
        context = context.split("\n\nQuestion:", 1)[0]
        words = context.split()[:12]
        if not words:
            return "Not answerable"
        return " ".join(words)


def _first_match(pattern: str, text: str, default: str) -> str:
    m = re.search(pattern, text)
    return m.group(1) if m else default


class MockEmbedProvider:
    """Hash character 3-grams of the lowercased text into a unit vector.

    Deterministic across processes (keyed blake2b, not the builtin ``hash``),
    order-sensitive, and similar strings land close together, which is all the
    routing tests need.
    """

    def __init__(self, seed: int = 0, dim: int = DEFAULT_EMBED_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.seed = seed
        self._dim = dim
        self.usage = ProviderUsage()

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def fingerprint(self) -> str:
        return f"mock-embed:seed={self.seed}:dim={self._dim}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        vectors = []
        for text in texts:
            if not text.strip():
                raise ValueError("cannot embed an empty string")
            vectors.append(self._embed_one(text))
        self.usage.record(sum(_approx_tokens(t) for t in texts), 0)
        return vectors

    def _embed_one(self, text: str) -> np.ndarray:
        padded = f"^{text.lower()}$"
        acc = np.zeros(self._dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            digest = _stable_digest(self.seed, padded[i: i + 3])
            acc[digest % self._dim] += 1.0 if digest & (1 << 62) else -1.0
        if not acc.any():
            # Signed trigram contributions can cancel exactly for very short
            # inputs; fall back to a single deterministic bucket so every
            # non-empty text still embeds.
            acc[_stable_digest(self.seed, padded) % self._dim] = 1.0
        return normalize_vector(acc)


# ---------------------------------------------------------------------------
# HTTP providers (chat-completions compatible wire shape)
# ---------------------------------------------------------------------------

_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class _HttpProviderBase:
    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "",
        timeout_ms: float = 60_000,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        max_retries: int = DEFAULT_MAX_RETRIES,
        retry_base_ms: float = 250.0,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.retry_base_ms = retry_base_ms
        self.usage = ProviderUsage()
        self._gate = threading.Semaphore(max(1, max_in_flight))
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(api_key_env, "") if api_key_env else ""
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout_ms / 1000.0, headers=headers)

    def _post_with_retries(self, path: str, payload: dict) -> dict:
        import httpx

        url = f"{self.base_url}{path}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.retry_base_ms * (2 ** (attempt - 1)) / 1000.0)
            try:
                with self._gate:
                    response = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"{url} returned {response.status_code}")
            if response.status_code in _RETRYABLE_STATUS:
                last_error = ProviderUnavailable(
                    f"{url} returned {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise ProviderUnavailable(
                    f"{url} returned {response.status_code}: {response.text[:200]}"
                )
            return response.json()
        raise ProviderUnavailable(
            f"{url} failed after {self.max_retries + 1} attempts: {last_error}"
        )


class HttpChatProvider(_HttpProviderBase):
    """POST /chat/completions with model/messages; bearer auth from the env."""

    @property
    def fingerprint(self) -> str:
        return f"http-chat:{self.base_url}:{self.model}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        start = time.perf_counter()
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._post_with_retries("/chat/completions", payload)
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed completion payload: {exc}") from exc
        if choice.get("finish_reason") == "length":
            raise ResponseTooLong(
                f"completion truncated at max_tokens={request.max_tokens}"
            )
        usage = data.get("usage") or {}
        response = ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=(time.perf_counter() - start) * 1000.0,
        )
        self.usage.record(response.prompt_tokens, response.completion_tokens)
        return response


class HttpEmbedProvider(_HttpProviderBase):
    """POST /embeddings; vectors are L2-normalized before returning."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._probed_dim: int | None = None

    @property
    def dim(self) -> int:
        if self._probed_dim is None:
            self.embed(["dimension probe"])
        return self._probed_dim  # type: ignore[return-value]

    @property
    def fingerprint(self) -> str:
        return f"http-embed:{self.base_url}:{self.model}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        if any(not t.strip() for t in texts):
            raise ValueError("cannot embed an empty string")
        data = self._post_with_retries(
            "/embeddings", {"model": self.model, "input": list(texts)}
        )
        try:
            rows = sorted(data["data"], key=lambda row: row["index"])
            vectors = [normalize_vector(np.asarray(row["embedding"])) for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed embedding payload: {exc}") from exc
        if len(vectors) != len(texts):
            raise DimMismatch(
                f"provider returned {len(vectors)} vectors for {len(texts)} inputs"
            )
        dims = {v.shape[0] for v in vectors}
        if len(dims) != 1:
            raise DimMismatch(f"provider returned inconsistent dims: {sorted(dims)}")
        dim = dims.pop()
        if self._probed_dim is None:
            self._probed_dim = dim
        elif dim != self._probed_dim:
            raise DimMismatch(f"dim changed from {self._probed_dim} to {dim}")
        usage = data.get("usage") or {}
        self.usage.record(int(usage.get("prompt_tokens", 0)), 0)
        return vectors


def embed_in_batches(
    provider: EmbedProvider, texts: Sequence[str], batch_size: int = 64
) -> list[np.ndarray]:
    """Embed texts in fixed-size batches, preserving input order."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    out: list[np.ndarray] = []
    for i in range(0, len(texts), batch_size):
        out.extend(provider.embed(texts[i: i + batch_size]))
    return out
