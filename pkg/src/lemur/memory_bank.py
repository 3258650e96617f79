"""Versioned document-embedding cache used to build history sequences."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .sqdc import cosine_sim


@dataclass(frozen=True)
class BankEntry:
    doc_id: int
    embedding: np.ndarray  # read-only copy
    written_step: int
    writer: int


@dataclass
class SequenceLookup:
    embeddings: np.ndarray  # (N, dim), zeros where absent
    present: np.ndarray  # (N,) bool
    coverage: float


class MemoryBank:
    """Map ``doc_id -> BankEntry`` with last-write-wins semantics.

    Entries are replaced wholesale, never mutated, so a concurrent reader sees
    either the old or the new vector. Writes and sweeps take a lock.
    """

    def __init__(self, dim: int, capacity: int = 1_000_000, window: int | None = None):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.capacity = capacity
        self.window = window
        self._entries: dict[int, BankEntry] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, doc_id) -> bool:
        return int(doc_id) in self._entries

    def put(self, doc_id, embedding, step: int, worker: int = 0) -> None:
        vec = np.array(embedding, dtype=np.float64, copy=True).reshape(-1)
        if vec.shape[0] != self.dim:
            raise ValueError(f"embedding has dim {vec.shape[0]}, bank expects {self.dim}")
        if not np.isfinite(vec).all():
            raise ValueError("embedding is not finite")
        vec.flags.writeable = False
        doc_id = int(doc_id)
        with self._lock:
            old = self._entries.get(doc_id)
            if old is not None:
                if step < old.written_step:
                    return
                if step == old.written_step and worker > old.writer:
                    return
            self._entries[doc_id] = BankEntry(doc_id, vec, int(step), int(worker))

    def put_many(self, doc_ids: Sequence, embeddings: np.ndarray, step: int, workers: Sequence[int] | int = 0) -> None:
        if np.isscalar(workers):
            workers = [workers] * len(doc_ids)
        for doc_id, emb, w in zip(doc_ids, embeddings, workers):
            self.put(doc_id, emb, step, w)

    def get(self, doc_id) -> np.ndarray | None:
        entry = self._entries.get(int(doc_id))
        return None if entry is None else entry.embedding

    def entry(self, doc_id) -> BankEntry | None:
        return self._entries.get(int(doc_id))

    def get_sequence(self, doc_ids: Sequence, step: int | None = None) -> SequenceLookup:
        n = len(doc_ids)
        emb = np.zeros((n, self.dim))
        present = np.zeros(n, dtype=bool)
        for i, doc_id in enumerate(doc_ids):
            entry = self._entries.get(int(doc_id))
            if entry is not None:
                emb[i] = entry.embedding
                present[i] = True
        coverage = 1.0 if n == 0 else float(present.mean())
        return SequenceLookup(emb, present, coverage)

    def lookup_batch(self, doc_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized lookup over an id array of any shape; ``-1`` is padding.

        Returns ``(embeddings, present)`` with shapes ``ids.shape + (dim,)`` and
        ``ids.shape``.
        """
        ids = np.asarray(doc_ids, dtype=np.int64)
        flat = ids.reshape(-1)
        emb = np.zeros((flat.size, self.dim))
        present = np.zeros(flat.size, dtype=bool)
        entries = self._entries
        for i, doc_id in enumerate(flat.tolist()):
            if doc_id < 0:
                continue
            entry = entries.get(doc_id)
            if entry is not None:
                emb[i] = entry.embedding
                present[i] = True
        return emb.reshape(ids.shape + (self.dim,)), present.reshape(ids.shape)

    def staleness_probe(self, doc_ids: Sequence, fresh: np.ndarray) -> float:
        """Mean cosine similarity between cached and freshly computed embeddings."""
        if len(doc_ids) == 0:
            raise ValueError("staleness probe needs a non-empty sample")
        sims = []
        for doc_id, vec in zip(doc_ids, fresh):
            cached = self.get(doc_id)
            if cached is None:
                raise KeyError(f"doc {doc_id} is not in the memory bank")
            sims.append(cosine_sim(cached, vec))
        return float(np.mean(sims))

    def sweep(self, step: int) -> int:
        """Drop entries outside the step window, then oldest-first down to capacity."""
        with self._lock:
            evicted = 0
            if self.window is not None:
                cutoff = step - self.window
                stale = [k for k, e in self._entries.items() if e.written_step < cutoff]
                for k in stale:
                    del self._entries[k]
                evicted += len(stale)
            overflow = len(self._entries) - self.capacity
            if overflow > 0:
                order = sorted(self._entries.values(), key=lambda e: (e.written_step, e.doc_id))
                for e in order[:overflow]:
                    del self._entries[e.doc_id]
                evicted += overflow
            return evicted

    # -- persistence ----------------------------------------------------------
    def snapshot(self) -> dict[str, np.ndarray]:
        ids = np.array(sorted(self._entries), dtype=np.int64)
        entries = [self._entries[i] for i in ids.tolist()]
        return {
            "doc_ids": ids,
            "steps": np.array([e.written_step for e in entries], dtype=np.int64),
            "writers": np.array([e.writer for e in entries], dtype=np.int64),
            "vectors": np.stack([e.embedding for e in entries]) if entries else np.zeros((0, self.dim)),
        }

    @classmethod
    def from_snapshot(cls, snap: dict[str, np.ndarray], capacity: int = 1_000_000, window: int | None = None) -> "MemoryBank":
        vectors = np.asarray(snap["vectors"], dtype=np.float64)
        bank = cls(vectors.shape[1], capacity, window)
        for doc_id, step, writer, vec in zip(snap["doc_ids"], snap["steps"], snap["writers"], vectors):
            bank.put(int(doc_id), vec, int(step), int(writer))
        return bank

    def doc_ids(self) -> Iterable[int]:
        return self._entries.keys()
