"""Session-masked query-to-document contrastive loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import Tensor

NEGATIVE_STRATEGIES = ("in_batch_positives", "in_batch_all")


@dataclass
class SqdcConfig:
    temperature: float = 50.0
    negative_strategy: str = "in_batch_positives"
    enabled: bool = True
    session_mask_enabled: bool = True
    reduction: str = "mean"  # "mean" over positives or raw "sum"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.negative_strategy not in NEGATIVE_STRATEGIES:
            raise ValueError(f"negative_strategy must be one of {NEGATIVE_STRATEGIES}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError("reduction must be 'mean' or 'sum'")


def cosine_sim(q, d) -> float:
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    nq, nd = np.linalg.norm(q), np.linalg.norm(d)
    if nq == 0.0 or nd == 0.0:
        raise ValueError("cosine similarity of a zero-norm vector")
    return float(np.clip(q @ d / (nq * nd), -1.0, 1.0))


def cosine_matrix(q: Tensor, d: Tensor) -> Tensor:
    """``S[i, j] = sim(q_i, d_j)`` for row-stacked embeddings."""
    return nx.matmul(nx.l2_normalize(q, axis=-1), nx.l2_normalize(d, axis=-1).transpose())


def build_session_mask(qids: Sequence) -> np.ndarray:
    qids = np.asarray(qids)
    if qids.ndim != 1 or len(qids) == 0:
        raise ValueError("need at least one query id")
    same = qids[:, None] == qids[None, :]
    mask = (~same).astype(np.int64)
    np.fill_diagonal(mask, 1)
    return mask


def denominator_mask(labels: Sequence[int], session_mask: np.ndarray, config: SqdcConfig) -> np.ndarray:
    """Boolean K x K matrix of denominator terms actually summed."""
    allowed = np.asarray(session_mask, dtype=bool).copy()
    k = allowed.shape[0]
    if not config.session_mask_enabled:
        allowed[:] = True
    if config.negative_strategy == "in_batch_positives":
        pos = np.asarray(labels, dtype=bool)
        allowed &= pos[None, :]
    allowed[np.arange(k), np.arange(k)] = True
    return allowed


def sqdc_loss(
    q: Tensor,
    d: Tensor,
    labels: Sequence[int],
    session_mask: np.ndarray,
    config: SqdcConfig,
) -> Tensor:
    """Contrastive loss summed (or averaged) over positive-labeled rows.

    Row ``i`` contributes ``-log(exp(T s_ii) / sum_j A_ij exp(T s_ij))``.
    """
    labels = np.asarray(labels)
    k = len(labels)
    if q.shape[0] != k or d.shape[0] != k:
        raise ValueError("q, d and labels must share the batch dimension")
    if q.shape[-1] != d.shape[-1]:
        raise ValueError("query and doc embeddings differ in dimension")
    pos = np.flatnonzero(labels == 1)
    if not config.enabled or len(pos) == 0:
        return Tensor(0.0)
    allowed = denominator_mask(labels, session_mask, config)[pos]
    logits = cosine_matrix(q[pos], d) * config.temperature  # (P, K)
    shift = np.where(allowed, logits.data, -np.inf).max(axis=1, keepdims=True)
    e = nx.exp(logits - shift)
    denom = nx.where(allowed, e, 0.0).sum(axis=1)
    lse = nx.log(denom) + shift[:, 0]
    diag = logits[np.arange(len(pos)), pos]
    total = (lse - diag).sum()
    if config.reduction == "mean":
        total = total * (1.0 / len(pos))
    return total
