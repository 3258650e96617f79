"""Feed-forward feature fusion and CTR head, plus the training losses."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import ParamStore, Tensor

LOGIT_CLAMP = 30.0


@dataclass
class FeatureBundle:
    user_id_emb: Tensor
    doc_id_emb: Tensor
    query_id_emb: Tensor
    q_emb: Tensor
    d_emb: Tensor
    decoder_out: Tensor
    sim_feats: Tensor
    dense: Tensor

    def components(self) -> list[tuple[str, Tensor]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def fused(self) -> Tensor:
        return nx.concat([t for _, t in self.components()], axis=-1)

    def dims(self) -> dict[str, int]:
        return {name: t.shape[-1] for name, t in self.components()}


@dataclass
class CtrOutput:
    logit: Tensor
    y_hat: Tensor


class Ranker:
    """Three dense layers over the concatenated bundle."""

    def __init__(self, params: ParamStore, prefix: str, input_dim: int, hidden: Sequence[int] = (128, 64)):
        self.input_dim = input_dim
        sizes = [input_dim, *hidden, 1]
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.layers.append((params.glorot(f"{prefix}.fc{i}.w", a, b), params.zeros(f"{prefix}.fc{i}.b", (b,))))

    def logits(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"fused features have dim {x.shape[-1]}, ranker expects {self.input_dim}")
        for i, (w, b) in enumerate(self.layers):
            x = nx.linear(x, w, b)
            if i < len(self.layers) - 1:
                x = nx.relu(x)
        return x.reshape(x.shape[0])

    def fuse_and_score(self, bundle: FeatureBundle) -> CtrOutput:
        logit = nx.clip(self.logits(bundle.fused()), -LOGIT_CLAMP, LOGIT_CLAMP)
        return CtrOutput(logit, nx.sigmoid(logit))


def bce_loss(y_hat: Tensor, y) -> Tensor:
    y = np.asarray(y, dtype=np.float64)
    p = y_hat.data
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("predicted probabilities must lie strictly inside (0, 1)")
    if p.shape != y.shape:
        raise ValueError("predictions and labels differ in shape")
    ll = y * nx.log(y_hat) + (1.0 - y) * nx.log(1.0 - y_hat)
    return -ll.mean()


def joint_loss(ctr: Tensor, sqdc: Tensor, lam: float) -> Tensor:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return ctr + sqdc * lam
