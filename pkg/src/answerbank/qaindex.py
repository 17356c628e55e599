"""Exact inner-product search over QA-bank question embeddings.

The index is a flat contiguous float32 matrix searched by brute force; at the
bank sizes this system targets an exact linear scan stays well inside the
latency budget and removes retrieval recall as a confound. Results order by
score descending with ties broken by qa_id, so searches are reproducible.

On disk: a small binary header (magic, version, dim, count, embedder
fingerprint, sha256 checksum), the row-major float32 vectors, and a JSON
metadata trailer.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptIndex, DimMismatch, EmptyIndex, FingerprintMismatch
from .gateway import EmbedProvider, embed_in_batches
from .qagen import QABank

INDEX_FILENAME = "bank.index"
_MAGIC = b"ABIX"
_VERSION = 1
DEFAULT_BATCH_SIZE = 64


@dataclass
class ScoredHit:
    qa_id: str
    score: float
    rank: int


class QAIndex:
    """Immutable after construction; concurrent searches need no locking."""

    def __init__(
        self,
        matrix: np.ndarray,
        qa_ids: Sequence[str],
        id_to_meta: dict[str, dict],
        embedder_fingerprint: str,
    ):
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        if matrix.shape[0] != len(qa_ids):
            raise ValueError("row count does not match qa_ids")
        if len(set(qa_ids)) != len(qa_ids):
            raise ValueError("qa_ids must be unique")
        missing = [qa_id for qa_id in qa_ids if qa_id not in id_to_meta]
        if missing:
            raise ValueError(f"missing metadata for {missing[:3]}")
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.qa_ids = list(qa_ids)
        self.id_to_meta = id_to_meta
        self.embedder_fingerprint = embedder_fingerprint
        # Lexicographic rank per row, used as the deterministic tie-break.
        order = sorted(range(len(self.qa_ids)), key=lambda i: self.qa_ids[i])
        self._id_rank = np.empty(len(self.qa_ids), dtype=np.int64)
        for rank, row in enumerate(order):
            self._id_rank[row] = rank

    def __len__(self) -> int:
        return len(self.qa_ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def scores(self, query_vec: np.ndarray) -> np.ndarray:
        query = np.asarray(query_vec, dtype=np.float32)
        if query.shape != (self.dim,):
            raise DimMismatch(f"query dim {query.shape} != index dim {self.dim}")
        return self.matrix @ query

    def search(self, query_vec: np.ndarray, k: int) -> list[ScoredHit]:
        """Exact top-k by inner product; ties broken by qa_id ascending."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self) == 0:
            raise EmptyIndex("index has no entries")
        scores = self.scores(query_vec)
        order = np.lexsort((self._id_rank, -scores))
        top = order[: min(k, len(self))]
        return [
            ScoredHit(qa_id=self.qa_ids[row], score=float(scores[row]), rank=rank + 1)
            for rank, row in enumerate(top)
        ]


def build_index(
    bank: QABank, embed: EmbedProvider, batch_size: int = DEFAULT_BATCH_SIZE
) -> QAIndex:
    """Embed every bank question (batched) into a searchable index."""
    if not bank.qa_pairs:
        raise ValueError("cannot index an empty bank")
    qa_ids = [pair.qa_id for pair in bank.qa_pairs]
    if len(set(qa_ids)) != len(qa_ids):
        dupes = sorted({q for q in qa_ids if qa_ids.count(q) > 1})
        raise ValueError(f"duplicate qa_ids in bank: {dupes[:3]}")
    vectors = embed_in_batches(
        embed, [pair.question for pair in bank.qa_pairs], batch_size
    )
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise DimMismatch(f"inconsistent embedding dims: {sorted(dims)}")
    matrix = np.stack(vectors).astype(np.float32)
    id_to_meta = {
        pair.qa_id: {
            "answer": pair.answer,
            "node_id": pair.node_id,
            "doc_id": pair.doc_id,
        }
        for pair in bank.qa_pairs
    }
    return QAIndex(
        matrix=matrix,
        qa_ids=qa_ids,
        id_to_meta=id_to_meta,
        embedder_fingerprint=embed.fingerprint,
    )


def save_index(index: QAIndex, path: Path) -> None:
    trailer = json.dumps(
        {"qa_ids": index.qa_ids, "id_to_meta": index.id_to_meta},
        ensure_ascii=False,
    ).encode("utf-8")
    vectors = index.matrix.astype("<f4").tobytes(order="C")
    payload = vectors + struct.pack("<Q", len(trailer)) + trailer
    checksum = hashlib.sha256(payload).digest()
    fingerprint = index.embedder_fingerprint.encode("utf-8")
    header = (
        _MAGIC
        + struct.pack("<III", _VERSION, index.dim, len(index))
        + struct.pack("<I", len(fingerprint))
        + fingerprint
        + checksum
    )
    path.write_bytes(header + payload)


def load_index(
    path: Path, expected_fingerprint: str | None = None, force: bool = False
) -> QAIndex:
    """Read an index file back; integrity- and fingerprint-checked.

    ``expected_fingerprint`` is the configured embedding provider's identity;
    a mismatch is an error unless ``force`` is set, because querying with a
    different embedder silently breaks every similarity score.
    """
    raw = path.read_bytes()
    try:
        if raw[:4] != _MAGIC:
            raise CorruptIndex(f"{path}: bad magic")
        version, dim, count = struct.unpack_from("<III", raw, 4)
        if version != _VERSION:
            raise CorruptIndex(f"{path}: unsupported version {version}")
        fp_len = struct.unpack_from("<I", raw, 16)[0]
        offset = 20
        fingerprint = raw[offset: offset + fp_len].decode("utf-8")
        offset += fp_len
        checksum = raw[offset: offset + 32]
        offset += 32
        payload = raw[offset:]
        if hashlib.sha256(payload).digest() != checksum:
            raise CorruptIndex(f"{path}: checksum mismatch")
        vec_bytes = count * dim * 4
        matrix = np.frombuffer(payload[:vec_bytes], dtype="<f4").reshape(count, dim)
        trailer_len = struct.unpack_from("<Q", payload, vec_bytes)[0]
        trailer_start = vec_bytes + 8
        trailer = json.loads(
            payload[trailer_start: trailer_start + trailer_len].decode("utf-8")
        )
        qa_ids = trailer["qa_ids"]
        id_to_meta = trailer["id_to_meta"]
    except CorruptIndex:
        raise
    except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptIndex(f"{path}: truncated or malformed ({exc})") from exc
    if expected_fingerprint is not None and fingerprint != expected_fingerprint and not force:
        raise FingerprintMismatch(
            f"index built with {fingerprint!r}, configured provider is "
            f"{expected_fingerprint!r} (pass force to override)"
        )
    return QAIndex(
        matrix=matrix.copy(),
        qa_ids=qa_ids,
        id_to_meta=id_to_meta,
        embedder_fingerprint=fingerprint,
    )
