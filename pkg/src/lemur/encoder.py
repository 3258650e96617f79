"""Bidirectional transformer encoders for raw query and document tokens.

Document inputs are laid out as ``[cls, title.., sep, ocr.., sep, asr.., sep,
cover_ocr..]``; queries as ``[cls, query..]``. Token, position and type
embeddings are summed at the input and the embedding is read from the ``cls``
position, then projected to ``output_dim``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import ParamStore, Tensor

DOC_FEATURES = ("title", "ocr", "asr", "cover_ocr")
DEFAULT_MAX_LENGTHS = {"query": 10, "title": 31, "ocr": 124, "asr": 12, "cover_ocr": 12}

# type ids
TYPE_CLS = 0
TYPE_SEP = 1
TYPE_IDS = {"query": 2, "title": 3, "ocr": 4, "asr": 5, "cover_ocr": 6}
NUM_TYPES = 7


@dataclass
class TokenFeature:
    name: str
    tokens: Sequence[int]
    max_length: int

    def __post_init__(self):
        if self.name not in DEFAULT_MAX_LENGTHS:
            raise ValueError(f"unknown feature {self.name!r}")
        if len(self.tokens) > self.max_length:
            raise ValueError(
                f"feature {self.name!r} has {len(self.tokens)} tokens, cap is {self.max_length}"
            )


@dataclass
class EncoderInput:
    """One encoder row. ``token_ids`` uses ``vocab_size`` for cls and ``vocab_size + 1`` for sep."""

    token_ids: np.ndarray
    positions: np.ndarray
    types: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class EncoderConfig:
    layers: int = 2
    model_dim: int = 32
    heads: int = 2
    vocab_size: int = 4096
    output_dim: int = 32
    ffn_mult: int = 4
    max_positions: int = 192
    pre_norm: bool = True
    scale_attention: bool = True
    ln_eps: float = 1e-5
    init_std: float = 0.1

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim={self.model_dim} is not divisible by heads={self.heads}")
        for name in ("layers", "model_dim", "heads", "vocab_size", "output_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"encoder {name} must be positive")


def cls_id(vocab_size: int) -> int:
    return vocab_size


def sep_id(vocab_size: int) -> int:
    return vocab_size + 1


def pad_id(vocab_size: int) -> int:
    return vocab_size + 2


def _check_tokens(name: str, tokens: Sequence[int], vocab_size: int) -> None:
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise ValueError(f"feature {name!r} has token {t} outside [0, {vocab_size})")


def build_doc_input(features: Sequence[TokenFeature], vocab_size: int) -> EncoderInput:
    names = tuple(f.name for f in features)
    if names != DOC_FEATURES:
        raise ValueError(f"document features must be {DOC_FEATURES}, got {names}")
    ids = [cls_id(vocab_size)]
    types = [TYPE_CLS]
    for i, feat in enumerate(features):
        _check_tokens(feat.name, feat.tokens, vocab_size)
        if i:
            ids.append(sep_id(vocab_size))
            types.append(TYPE_SEP)
        ids.extend(int(t) for t in feat.tokens)
        types.extend([TYPE_IDS[feat.name]] * len(feat.tokens))
    n = len(ids)
    return EncoderInput(
        np.asarray(ids, dtype=np.int64),
        np.arange(n, dtype=np.int64),
        np.asarray(types, dtype=np.int64),
        np.ones(n, dtype=bool),
    )


def build_query_input(tokens: Sequence[int], vocab_size: int, max_length: int = 10) -> EncoderInput:
    TokenFeature("query", tokens, max_length)
    _check_tokens("query", tokens, vocab_size)
    ids = [cls_id(vocab_size), *(int(t) for t in tokens)]
    types = [TYPE_CLS] + [TYPE_IDS["query"]] * len(tokens)
    n = len(ids)
    return EncoderInput(
        np.asarray(ids, dtype=np.int64),
        np.arange(n, dtype=np.int64),
        np.asarray(types, dtype=np.int64),
        np.ones(n, dtype=bool),
    )


@dataclass
class EncoderBatch:
    token_ids: np.ndarray  # (B, L)
    positions: np.ndarray
    types: np.ndarray
    mask: np.ndarray  # bool, True for real tokens

    def __len__(self) -> int:
        return self.token_ids.shape[0]


def pad_batch(inputs: Sequence[EncoderInput], vocab_size: int, length: int | None = None) -> EncoderBatch:
    n = max((len(x) for x in inputs), default=1)
    if length is not None:
        if length < n:
            raise ValueError(f"pad length {length} shorter than longest input {n}")
        n = length
    b = len(inputs)
    tok = np.full((b, n), pad_id(vocab_size), dtype=np.int64)
    pos = np.zeros((b, n), dtype=np.int64)
    typ = np.zeros((b, n), dtype=np.int64)
    mask = np.zeros((b, n), dtype=bool)
    for i, x in enumerate(inputs):
        m = len(x)
        tok[i, :m] = x.token_ids
        pos[i, :m] = x.positions
        typ[i, :m] = x.types
        mask[i, :m] = x.mask
        pos[i, m:] = np.arange(m, n)
    return EncoderBatch(tok, pos, typ, mask)


class TransformerEncoder:
    """Stack of bidirectional self-attention blocks with a cls readout.

    ``invocations`` counts encoded rows so callers can assert the serving path
    never touches the encoder.
    """

    def __init__(self, params: ParamStore, prefix: str, config: EncoderConfig):
        self.cfg = config
        self.prefix = prefix
        self.invocations = 0
        c = config
        d = c.model_dim
        std = c.init_std
        self.tok_emb = params.normal(f"{prefix}.tok_emb", (c.vocab_size + 3, d), std)
        self.pos_emb = params.normal(f"{prefix}.pos_emb", (c.max_positions, d), std)
        self.type_emb = params.normal(f"{prefix}.type_emb", (NUM_TYPES, d), std)
        self.layers = []
        for i in range(c.layers):
            p = f"{prefix}.layers.{i}"
            self.layers.append(
                dict(
                    ln1_g=params.ones(f"{p}.ln1.gain", (d,)),
                    ln1_b=params.zeros(f"{p}.ln1.bias", (d,)),
                    wq=params.glorot(f"{p}.attn.wq", d, d),
                    wk=params.glorot(f"{p}.attn.wk", d, d),
                    wv=params.glorot(f"{p}.attn.wv", d, d),
                    wo=params.glorot(f"{p}.attn.wo", d, d),
                    ln2_g=params.ones(f"{p}.ln2.gain", (d,)),
                    ln2_b=params.zeros(f"{p}.ln2.bias", (d,)),
                    w1=params.glorot(f"{p}.ffn.w1", d, c.ffn_mult * d),
                    b1=params.zeros(f"{p}.ffn.b1", (c.ffn_mult * d,)),
                    w2=params.glorot(f"{p}.ffn.w2", c.ffn_mult * d, d),
                    b2=params.zeros(f"{p}.ffn.b2", (d,)),
                )
            )
        self.lnf_g = params.ones(f"{prefix}.ln_final.gain", (d,))
        self.lnf_b = params.zeros(f"{prefix}.ln_final.bias", (d,))
        self.w_out = params.glorot(f"{prefix}.proj.w", d, c.output_dim)
        self.b_out = params.zeros(f"{prefix}.proj.b", (c.output_dim,))

    def _attention(self, layer: dict, x_q: Tensor, x_kv: Tensor, mask: np.ndarray) -> Tensor:
        c = self.cfg
        b, lq, d = x_q.shape
        lk = x_kv.shape[1]
        h, dh = c.heads, d // c.heads
        q = nx.matmul(x_q, layer["wq"]).reshape(b, lq, h, dh).transpose(0, 2, 1, 3)
        k = nx.matmul(x_kv, layer["wk"]).reshape(b, lk, h, dh).transpose(0, 2, 1, 3)
        v = nx.matmul(x_kv, layer["wv"]).reshape(b, lk, h, dh).transpose(0, 2, 1, 3)
        scale = 1.0 / np.sqrt(dh) if c.scale_attention else 1.0
        out = nx.scaled_dot_attention(q, k, v, mask=mask[:, None, None, :], scale=scale)
        out = out.transpose(0, 2, 1, 3).reshape(b, lq, d)
        return nx.matmul(out, layer["wo"])

    def _ffn(self, layer: dict, x: Tensor) -> Tensor:
        return nx.linear(nx.gelu(nx.linear(x, layer["w1"], layer["b1"])), layer["w2"], layer["b2"])

    def forward(self, batch: EncoderBatch) -> Tensor:
        """Encode a padded batch; returns ``(B, output_dim)``."""
        c = self.cfg
        if batch.token_ids.shape[1] > c.max_positions:
            raise ValueError(f"sequence length {batch.token_ids.shape[1]} exceeds max_positions {c.max_positions}")
        if not batch.mask[:, 0].all():
            raise ValueError("position 0 must hold a real cls token")
        self.invocations += len(batch)
        x = (
            nx.embedding(self.tok_emb, batch.token_ids)
            + nx.embedding(self.pos_emb, batch.positions)
            + nx.embedding(self.type_emb, batch.types)
        )
        mask = batch.mask
        n_layers = len(self.layers)
        for i, layer in enumerate(self.layers):
            # the last block only needs the cls row
            last = i == n_layers - 1
            if c.pre_norm:
                h = nx.layer_norm(x, layer["ln1_g"], layer["ln1_b"], c.ln_eps)
                h_q = h[:, :1] if last else h
                x = (x[:, :1] if last else x) + self._attention(layer, h_q, h, mask)
                h = nx.layer_norm(x, layer["ln2_g"], layer["ln2_b"], c.ln_eps)
                x = x + self._ffn(layer, h)
            else:
                x_q = x[:, :1] if last else x
                x = nx.layer_norm(x_q + self._attention(layer, x_q, x, mask), layer["ln1_g"], layer["ln1_b"], c.ln_eps)
                x = nx.layer_norm(x + self._ffn(layer, x), layer["ln2_g"], layer["ln2_b"], c.ln_eps)
        cls = x[:, 0]
        if c.pre_norm:
            cls = nx.layer_norm(cls, self.lnf_g, self.lnf_b, c.ln_eps)
        return nx.linear(cls, self.w_out, self.b_out)

    def encode(self, inputs: Sequence[EncoderInput]) -> Tensor:
        return self.forward(pad_batch(inputs, self.cfg.vocab_size))


def encode_query(encoder: TransformerEncoder, inputs: Sequence[EncoderInput]) -> Tensor:
    return encoder.encode(inputs)


def encode_doc(encoder: TransformerEncoder, inputs: Sequence[EncoderInput]) -> Tensor:
    return encoder.encode(inputs)

