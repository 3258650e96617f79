"""In-process simulation of multi-worker document encoding.

Per step: each worker holds a shard of the batch; ``plan_dedup`` picks one
owner per distinct document across all shards, owners encode their documents,
``all_gather_embeddings`` publishes the results to every worker, and
``dedup_join`` swaps every occurrence of a fresh document (target or history
slot) for the fresh embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from . import numerics as nx
from .numerics import Tensor


@dataclass
class WorkerShard:
    worker: int
    sample_index: np.ndarray  # indices into the step batch
    doc_ids: np.ndarray  # target doc of each local sample


@dataclass
class DedupPlan:
    unique_ids: np.ndarray  # in owner order: worker, then local slot
    owner: dict[int, tuple[int, int]]
    consumers: dict[int, list[tuple[int, int]]]  # doc_id -> [(worker, local position)]
    per_worker: dict[int, list[int]] = field(default_factory=dict)  # worker -> doc ids it encodes

    def __len__(self) -> int:
        return len(self.unique_ids)


@dataclass
class SamplingPlan:
    p: float
    q: float
    forward_set: np.ndarray
    backward_set: np.ndarray


@dataclass
class GlobalTable:
    """Doc embeddings every worker sees after the all-gather."""

    doc_ids: np.ndarray  # row order
    embeddings: Tensor  # (U, dim)
    sorted_ids: np.ndarray
    sorted_rows: np.ndarray

    def rows_for(self, ids) -> np.ndarray:
        return kernels.join_index(np.asarray(ids, dtype=np.int64), self.sorted_ids, self.sorted_rows)

    def as_dict(self) -> dict[int, np.ndarray]:
        return {int(k): self.embeddings.data[i] for i, k in enumerate(self.doc_ids)}


def split_shards(doc_ids: Sequence[int], workers: int) -> list[WorkerShard]:
    """Contiguous split of a batch over ``workers`` shards."""
    if workers < 1:
        raise ValueError("need at least one worker")
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    parts = np.array_split(np.arange(len(doc_ids)), workers)
    return [WorkerShard(w, idx, doc_ids[idx]) for w, idx in enumerate(parts)]


def plan_dedup(shards: Sequence[WorkerShard], dedup: bool = True) -> DedupPlan:
    """Assign each distinct doc to its lowest ``(worker, slot)`` occurrence.

    With ``dedup=False`` every occurrence is its own computation; the owner
    map then points at the first occurrence and ``unique_ids`` may repeat.
    """
    if len(shards) < 1:
        raise ValueError("need at least one shard")
    owner: dict[int, tuple[int, int]] = {}
    consumers: dict[int, list[tuple[int, int]]] = {}
    per_worker: dict[int, list[int]] = {s.worker: [] for s in shards}
    unique: list[int] = []
    for shard in sorted(shards, key=lambda s: s.worker):
        for slot, doc_id in enumerate(shard.doc_ids.tolist()):
            consumers.setdefault(doc_id, []).append((shard.worker, slot))
            if doc_id not in owner:
                owner[doc_id] = (shard.worker, slot)
                unique.append(doc_id)
                per_worker[shard.worker].append(doc_id)
            elif not dedup:
                unique.append(doc_id)
                per_worker[shard.worker].append(doc_id)
    return DedupPlan(np.asarray(unique, dtype=np.int64), owner, consumers, per_worker)


def all_gather_embeddings(plan: DedupPlan, fresh: dict[int, Tensor]) -> GlobalTable:
    """Concatenate owner outputs (worker order) into one table.

    ``fresh[w]`` holds rows for ``plan.per_worker[w]`` in order. Repeated ids
    (no-dedup plans) resolve to their first row.
    """
    parts, ids = [], []
    for w in sorted(plan.per_worker):
        expected = plan.per_worker[w]
        if not expected:
            continue
        if w not in fresh:
            raise KeyError(f"worker {w} produced no embeddings")
        if fresh[w].shape[0] != len(expected):
            raise ValueError(f"worker {w} produced {fresh[w].shape[0]} rows, expected {len(expected)}")
        parts.append(fresh[w])
        ids.extend(expected)
    if not parts:
        return GlobalTable(np.zeros(0, np.int64), Tensor(np.zeros((0, 0))), np.zeros(0, np.int64), np.zeros(0, np.int64))
    ids = np.asarray(ids, dtype=np.int64)
    table = parts[0] if len(parts) == 1 else nx.concat(parts, axis=0)
    uniq, first = np.unique(ids, return_index=True)
    return GlobalTable(ids, table, uniq, first.astype(np.int64))


def dedup_join(history_ids: np.ndarray, history_emb: Tensor, present: np.ndarray, table: GlobalTable) -> tuple[Tensor, np.ndarray, int]:
    """Replace history slots whose doc was encoded this step.

    Returns ``(embeddings, present, refreshed_count)``; refreshed slots become
    present and carry the table row (with its gradient path).
    """
    history_ids = np.asarray(history_ids, dtype=np.int64)
    rows = table.rows_for(history_ids)
    hit = rows >= 0
    n_hit = int(hit.sum())
    if n_hit == 0:
        return history_emb, present, 0
    gathered = nx.embedding(table.embeddings, np.where(hit, rows, 0))
    out = nx.where(hit[..., None], gathered, history_emb)
    return out, present | hit, n_hit


def subset_size(b: int, pct: float) -> int:
    """Round half up on ``pct% * b``; at least 1 when ``pct > 0``."""
    if pct <= 0:
        return 0
    return max(1, min(b, int(np.floor(pct * b / 100.0 + 0.5))))


def plan_sampling(b: int, p: float, q: float, rng: np.random.Generator) -> SamplingPlan:
    if not 0 <= q <= p <= 100:
        raise ValueError(f"need 0 <= q <= p <= 100, got p={p}, q={q}")
    n_f, n_b = subset_size(b, p), subset_size(b, q)
    if n_f == b:
        forward = np.arange(b)
    else:
        forward = np.sort(rng.choice(b, size=n_f, replace=False))
    if n_b == n_f:
        backward = forward.copy()
    else:
        backward = np.sort(rng.choice(forward, size=n_b, replace=False))
    return SamplingPlan(p, q, forward, backward)
