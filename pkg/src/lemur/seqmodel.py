"""Cross-attention decoder and similarity features over banked history embeddings.

Each decoder layer computes ``Q_next = FFN(sum_j a_j d_j)`` with
``a_j = softmax_j(Q . d_j)`` over the present history items. Keys and values
are the raw history embeddings at every layer; items never attend to each
other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import ParamStore, Tensor
from .sqdc import cosine_sim

SENTINEL = -2.0


@dataclass
class HistorySequence:
    embeddings: np.ndarray  # (N, dim)
    present: np.ndarray  # (N,) bool
    doc_ids: np.ndarray  # (N,)


@dataclass
class SimilarityFeatures:
    raw: np.ndarray
    ranked: np.ndarray


@dataclass
class DecoderConfig:
    dim: int = 32
    context_dim: int = 64
    layers: int = 1
    heads: int = 1
    scale_attention: bool = False
    ffn_mult: int = 4


class Decoder:
    def __init__(self, params: ParamStore, prefix: str, config: DecoderConfig):
        if config.dim % config.heads:
            raise ValueError("decoder dim must be divisible by heads")
        self.cfg = config
        d, h = config.dim, config.ffn_mult * config.dim
        self.w_q1 = params.glorot(f"{prefix}.q1.w", config.context_dim, d)
        self.b_q1 = params.zeros(f"{prefix}.q1.b", (d,))
        self.empty_out = params.zeros(f"{prefix}.empty_out", (d,))
        self.ffn = []
        for i in range(config.layers):
            p = f"{prefix}.layers.{i}.ffn"
            self.ffn.append(
                (
                    params.glorot(f"{p}.w1", d, h),
                    params.zeros(f"{p}.b1", (h,)),
                    params.glorot(f"{p}.w2", h, d),
                    params.zeros(f"{p}.b2", (d,)),
                )
            )

    def init_query_token(self, context: Tensor) -> Tensor:
        if context.shape[-1] != self.cfg.context_dim:
            raise ValueError(f"context has dim {context.shape[-1]}, decoder expects {self.cfg.context_dim}")
        return nx.linear(context, self.w_q1, self.b_q1)

    def _cross_attention(self, query: Tensor, history: Tensor, mask: np.ndarray) -> Tensor:
        b, n, d = history.shape
        h = self.cfg.heads
        dh = d // h
        q = query.reshape(b, h, 1, dh)
        kv = history.reshape(b, n, h, dh).transpose(0, 2, 1, 3)
        scale = 1.0 / np.sqrt(dh) if self.cfg.scale_attention else 1.0
        out = nx.scaled_dot_attention(q, kv, kv, mask=mask[:, None, None, :], scale=scale)
        return out.reshape(b, d)

    def forward(self, q1: Tensor, history: Tensor, present: np.ndarray) -> Tensor:
        """``q1`` (B, dim), ``history`` (B, N, dim), ``present`` (B, N) -> (B, dim)."""
        b = q1.shape[0]
        present = np.asarray(present, dtype=bool).reshape(b, -1)
        n = present.shape[1]
        has_any = present.any(axis=1)
        fallback = nx.reshape(self.empty_out, (1, self.cfg.dim)) * np.ones((b, 1))
        if n == 0 or not has_any.any():
            return fallback
        # rows with no present items run on a dummy mask and are replaced by the fallback
        mask = present | ~has_any[:, None]
        q = q1
        for w1, b1, w2, b2 in self.ffn:
            attn = self._cross_attention(q, history, mask)
            q = nx.linear(nx.gelu(nx.linear(attn, w1, b1)), w2, b2)
        return nx.where(has_any[:, None], q, fallback)


def similarity_matrix(target: Tensor, history: Tensor, present: np.ndarray, target_present: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Batched similarity features.

    ``target`` (B, dim), ``history`` (B, N, dim). Returns ``(raw, ranked)``,
    both (B, N); absent history slots and rows without a target carry the
    sentinel -2.
    """
    b, n = present.shape
    present = np.asarray(present, dtype=bool)
    if target_present is None:
        target_present = np.ones(b, dtype=bool)
    target_present = np.asarray(target_present, dtype=bool)
    if n == 0:
        z = Tensor(np.zeros((b, 0)))
        return z, z
    valid = present & target_present[:, None]
    safe_t = nx.where(target_present[:, None], target, 1.0)
    safe_h = nx.where(present[:, :, None], history, 1.0)
    t = nx.l2_normalize(safe_t, axis=-1).reshape(b, 1, -1)
    hn = nx.l2_normalize(safe_h, axis=-1)
    sims = nx.matmul(t, hn.swapaxes(-1, -2)).reshape(b, n)
    raw = nx.where(valid, sims, SENTINEL)
    # descending over present entries, sentinel last; stable sort for determinism
    key = np.where(valid, -raw.data, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    rows = np.arange(b)[:, None]
    ranked = raw[rows, order]
    return raw, ranked


def similarity_features(target_doc, history: HistorySequence) -> SimilarityFeatures:
    """Unbatched numpy form of :func:`similarity_matrix`."""
    target = np.asarray(target_doc, dtype=np.float64)
    if np.linalg.norm(target) == 0.0:
        raise ValueError("target document embedding has zero norm")
    present = np.asarray(history.present, dtype=bool)
    raw = np.full(len(present), SENTINEL)
    for j, (vec, ok) in enumerate(zip(history.embeddings, present)):
        if ok:
            raw[j] = cosine_sim(target, vec)
    ranked = np.concatenate([np.sort(raw[present])[::-1], np.full((~present).sum(), SENTINEL)])
    return SimilarityFeatures(raw, ranked)
