"""Parameter-owning model: encoders, ID embeddings, sequence decoders, ranker."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .config import RunConfig
from .data import Corpus
from .encoder import (
    DOC_FEATURES,
    EncoderInput,
    TokenFeature,
    TransformerEncoder,
    build_doc_input,
    build_query_input,
    pad_batch,
)
from .numerics import ParamStore, Tensor
from .ranker import FeatureBundle, Ranker
from .seqmodel import Decoder, DecoderConfig, similarity_matrix

DENSE_FEATURES = ("target_miss", "query_doc_cosine", "request_centered_logit")
# request-centered features are T * delta-cosine squashed by tanh(x / CENTER_SCALE):
# linear for typical within-request spreads, bounded so a badly initialized
# encoder cannot push the ranker into the logit clamp
CENTER_SCALE = 5.0


def request_average(groups: np.ndarray, present: np.ndarray) -> np.ndarray:
    """(B, B) matrix averaging over the present rows that share a request id."""
    same = groups[:, None] == groups[None, :]
    weights = (same & present[None, :]).astype(np.float64)
    counts = weights.sum(axis=1, keepdims=True)
    return np.divide(weights, counts, out=np.zeros_like(weights), where=counts > 0)


class LemurModel:
    def __init__(self, config: RunConfig):
        self.cfg = config
        self.params = ParamStore(np.random.default_rng(config.train.seed))
        p = self.params
        data, t = config.data, config.train
        self.query_encoder = TransformerEncoder(p, "query_encoder", config.query_encoder)
        self.doc_encoder = TransformerEncoder(p, "doc_encoder", config.doc_encoder)
        self.dim = config.doc_encoder.output_dim
        self.user_emb = p.normal("ids.user", (data.n_users, t.id_dim), 0.05)
        self.doc_id_emb = p.normal("ids.doc", (data.n_docs, t.id_dim), 0.05)
        self.query_id_emb = p.normal("ids.query", (data.n_queries, t.id_dim), 0.05)
        self.context_dim = 3 * t.id_dim + 2 * self.dim + len(DENSE_FEATURES)
        self.caps = tuple(data.history_caps)
        self.decoders = [
            Decoder(
                p,
                f"seq.{i}",
                DecoderConfig(
                    dim=self.dim,
                    context_dim=self.context_dim,
                    layers=config.seq.decoder_layers,
                    heads=config.seq.decoder_heads,
                    scale_attention=config.seq.scale_attention,
                ),
            )
            for i in range(len(self.caps))
        ]
        n_sim = int(config.seq.use_raw_similarity) + int(config.seq.use_ranked_similarity)
        # raw / ranked vectors plus one request-centered affinity per sequence
        self.sim_dim = n_sim * sum(self.caps) + len(self.caps)
        self.ranker = Ranker(p, "ranker", self.context_dim + len(self.caps) * self.dim + self.sim_dim, t.ranker_hidden)
        self._doc_inputs: dict[int, EncoderInput] = {}
        self._query_inputs: dict[int, EncoderInput] = {}

    # -- inputs ----------------------------------------------------------------
    def attach_corpus(self, corpus: Corpus) -> None:
        d = self.cfg.data
        checks = [
            ("uid", corpus.uid, d.n_users),
            ("doc_id", corpus.doc_id, d.n_docs),
            ("query_id", corpus.query_id, d.n_queries),
        ]
        for name, arr, limit in checks:
            if len(arr) and (arr.min() < 0 or arr.max() >= limit):
                raise ValueError(f"corpus {name} outside [0, {limit}) required by the config")
        if tuple(corpus.history_caps) != self.caps:
            raise ValueError(f"corpus history caps {corpus.history_caps} differ from config {self.caps}")
        vocab, ml = d.vocab_size, d.max_lengths
        self._doc_inputs = {
            doc: build_doc_input([TokenFeature(n, feats[n], ml[n]) for n in DOC_FEATURES], vocab)
            for doc, feats in corpus.docs.items()
        }
        self._query_inputs = {q: build_query_input(toks, vocab, ml["query"]) for q, toks in corpus.queries.items()}

    def encode_docs(self, doc_ids) -> Tensor:
        inputs = [self._doc_inputs[int(d)] for d in doc_ids]
        return self.doc_encoder.forward(pad_batch(inputs, self.cfg.data.vocab_size))

    def encode_queries(self, query_ids) -> Tensor:
        inputs = [self._query_inputs[int(q)] for q in query_ids]
        return self.query_encoder.forward(pad_batch(inputs, self.cfg.data.vocab_size))

    # -- scoring -----------------------------------------------------------------
    def score(
        self,
        uids: np.ndarray,
        doc_ids: np.ndarray,
        query_ids: np.ndarray,
        q_emb: Tensor,
        d_emb: Tensor,
        target_present: np.ndarray,
        histories: list[tuple[Tensor, np.ndarray]],
        groups: np.ndarray | None = None,
    ):
        """Fuse everything into logits. Returns ``(CtrOutput, FeatureBundle)``.

        ``d_emb`` rows where ``target_present`` is False must be zero.
        ``histories`` holds one ``(embeddings (B,N,dim), present (B,N))`` per cap.
        ``groups`` are request ids (one query shown to one user); the centered
        logit compares each candidate's cosine with the mean over its request,
        scaled by the contrastive temperature. Without groups every row is its
        own request. The history affinity of each sequence (mean cosine between
        the target and the present history items) is centered the same way.
        """
        a = self.cfg.ablations
        b = len(uids)
        if a.stop_gradient:
            q_emb = q_emb.detach()
            d_emb = d_emb.detach()
            histories = [(h.detach(), m) for h, m in histories]
        if a.id_only:
            q_emb = Tensor(np.zeros((b, self.dim)))
            d_emb = Tensor(np.zeros((b, self.dim)))
            target_present = np.zeros(b, dtype=bool)
        miss = (~target_present).astype(np.float64)[:, None]
        if a.id_only:
            cos = centered = Tensor(np.zeros((b, 1)))
        else:
            safe_d = nx.where(target_present[:, None], d_emb, 1.0)
            cos = (nx.l2_normalize(q_emb, -1) * nx.l2_normalize(safe_d, -1)).sum(axis=1, keepdims=True)
            cos = nx.where(target_present[:, None], cos, 0.0)
            centered = self._center(cos, groups, target_present)
        dense = nx.concat([Tensor(miss), cos, centered], axis=1)
        u = nx.embedding(self.user_emb, uids)
        di = nx.embedding(self.doc_id_emb, doc_ids)
        qi = nx.embedding(self.query_id_emb, query_ids)
        context = nx.concat([u, di, qi, q_emb, d_emb, dense], axis=1)

        disabled = {0: a.no_short_seq, len(self.caps) - 1: a.no_long_seq}
        dec_outs, sims = [], []
        for i, (dec, (hist, present)) in enumerate(zip(self.decoders, histories)):
            n = self.caps[i]
            off = a.id_only or disabled.get(i, False)
            if off:
                dec_outs.append(Tensor(np.zeros((b, self.dim))))
            else:
                dec_outs.append(dec.forward(dec.init_query_token(context), hist, present))
            if off or a.no_cosine_sim:
                raw = ranked = Tensor(np.zeros((b, n)))
                affinity = Tensor(np.zeros((b, 1)))
            else:
                raw, ranked = similarity_matrix(d_emb, hist, present, target_present)
                valid = present & target_present[:, None]
                counts = valid.sum(axis=1, keepdims=True)
                mean_sim = nx.where(valid, raw, 0.0).sum(axis=1, keepdims=True) * (1.0 / np.maximum(counts, 1))
                affinity = self._center(mean_sim, groups, counts[:, 0] > 0)
            if self.cfg.seq.use_raw_similarity:
                sims.append(raw)
            if self.cfg.seq.use_ranked_similarity:
                sims.append(ranked)
            sims.append(affinity)
        bundle = FeatureBundle(
            user_id_emb=u,
            doc_id_emb=di,
            query_id_emb=qi,
            q_emb=q_emb,
            d_emb=d_emb,
            decoder_out=nx.concat(dec_outs, axis=1),
            sim_feats=nx.concat(sims, axis=1),
            dense=dense,
        )
        return self.ranker.fuse_and_score(bundle), bundle

    def _center(self, x: Tensor, groups, present: np.ndarray) -> Tensor:
        """Squashed ``T * (x - mean over present rows of the same request)``; zero where absent."""
        b = x.shape[0]
        groups = np.arange(b) if groups is None else np.asarray(groups)
        avg = request_average(groups, present)
        out = nx.tanh((x - nx.matmul(Tensor(avg), x)) * (self.cfg.sqdc.temperature / CENTER_SCALE))
        return nx.where(present[:, None], out, 0.0)
