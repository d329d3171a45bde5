"""Optional long-term memory: embed notable messages, retrieve by cosine similarity.

The default embedder is dependency-free feature hashing (lowercase word
tokens into 256 buckets, L2-normalized) so retrieval is deterministic across
processes; any embedder with the same interface can replace it.  Records
persist to an append-friendly JSONL file and survive restarts.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .context import Message, Role, utc_now

DEFAULT_DIMENSION = 256
DEFAULT_TOP_K = 4
DEFAULT_NOTABLE_PHRASES = ("remember", "note that", "from now on")

MEMORY_PREFIX = "Relevant memory:"


class MemoryStoreError(Exception):
    pass


class EmptyText(MemoryStoreError):
    pass


class DimensionMismatch(MemoryStoreError):
    pass


@dataclass(frozen=True)
class MemoryRecord:
    id: str
    text: str
    vector: np.ndarray
    tags: tuple[str, ...]
    session_id: str
    created_at: datetime


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic feature-hashing embedder: equal text -> equal vector."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION) -> None:
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        if not tokens:
            tokens = [text.strip().lower()]
        vec = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokens:
            digest = hashlib.sha1(tok.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:8], "big") % self.dimension] += 1.0
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def detect_notable(
    message: Message, phrases: Sequence[str] = DEFAULT_NOTABLE_PHRASES
) -> bool:
    """True if a user message matches the configured notability phrases."""
    if message.role is not Role.USER:
        return False
    text = message.text.lower()
    return any(p.lower() in text for p in phrases)


class MemoryStore:
    """Vector store with exhaustive cosine retrieval, JSONL persistence."""

    def __init__(
        self,
        path: str | Path | None = None,
        dimension: int = DEFAULT_DIMENSION,
        embedder: Optional[Embedder] = None,
    ) -> None:
        self.path = Path(path) if path else None
        self.embedder = embedder or HashingEmbedder(dimension)
        self.dimension = self.embedder.dimension
        self._records: dict[str, MemoryRecord] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[MemoryRecord]:
        return list(self._records.values())

    def upsert(self, record: MemoryRecord) -> None:
        if record.vector.shape != (self.dimension,):
            raise DimensionMismatch(
                f"vector has dimension {record.vector.shape}, store expects {self.dimension}"
            )
        if not record.text:
            raise MemoryStoreError("record text must be nonempty")
        self._records[record.id] = record
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(self._to_json(record)) + "\n")

    def add_text(
        self,
        text: str,
        tags: Sequence[str] = (),
        session_id: str = "",
        record_id: str | None = None,
        created_at: datetime | None = None,
    ) -> MemoryRecord:
        """Embed and store a text snippet; same (session, text) replaces."""
        rid = record_id or hashlib.sha1(f"{session_id}:{text}".encode("utf-8")).hexdigest()[:16]
        record = MemoryRecord(
            id=rid,
            text=text,
            vector=self.embedder.embed(text),
            tags=tuple(tags),
            session_id=session_id,
            created_at=created_at or utc_now(),
        )
        self.upsert(record)
        return record

    def retrieve(self, query: str, k: int = DEFAULT_TOP_K) -> list[tuple[MemoryRecord, float]]:
        """Top-k records by cosine similarity; ties broken by newest created_at."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._records:
            return []
        qv = self.embedder.embed(query)
        scored = [(rec, cosine(qv, rec.vector)) for rec in self._records.values()]
        scored.sort(key=lambda it: (-it[1], -it[0].created_at.timestamp(), it[0].id))
        return scored[:k]

    # -- persistence ----------------------------------------------------------

    @staticmethod
    def _to_json(record: MemoryRecord) -> dict:
        return {
            "id": record.id,
            "text": record.text,
            "vector": record.vector.tolist(),
            "tags": list(record.tags),
            "session_id": record.session_id,
            "created_at": record.created_at.isoformat(),
        }

    def _load(self) -> None:
        assert self.path is not None
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            record = MemoryRecord(
                id=d["id"],
                text=d["text"],
                vector=np.asarray(d["vector"], dtype=np.float64),
                tags=tuple(d["tags"]),
                session_id=d["session_id"],
                created_at=datetime.fromisoformat(d["created_at"]),
            )
            if record.vector.shape == (self.dimension,):
                self._records[record.id] = record  # later lines win (append log)


def memory_context_text(hits: Sequence[tuple[MemoryRecord, float]]) -> str:
    """Format retrieved records for injection ahead of a user message."""
    lines = [MEMORY_PREFIX]
    lines += [f"- {rec.text}" for rec, _ in hits]
    return "\n".join(lines)
