"""Synthetic search-log corpus with a planted content signal.

Documents and queries are bags of tokens drawn mostly from a latent topic's
word list. A click is Bernoulli with logit

    bias + w_match [doc topic == query topic] + w_interest [doc topic in user interests]
         + w_quality * doc quality + user bias

then flipped with probability ``label_noise``. Doc quality is visible only
through marker tokens in the OCR text. Document popularity inside a topic is
Zipf-distributed so the memory bank sees repeats.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoder import DEFAULT_MAX_LENGTHS, DOC_FEATURES


@dataclass
class SyntheticConfig:
    vocab_size: int = 4096
    n_topics: int = 16
    topic_vocab: int = 48
    quality_vocab: int = 24
    n_users: int = 400
    n_docs: int = 1500
    n_queries: int = 320
    n_sessions: int = 20000
    docs_per_session: int = 8
    relevant_fraction: float = 0.25
    interest_topics: int = 3
    interest_query_prob: float = 0.8
    history_caps: tuple[int, ...] = (8, 64)
    max_lengths: dict = field(default_factory=lambda: dict(DEFAULT_MAX_LENGTHS))
    mean_lengths: dict = field(default_factory=lambda: {"query": 4, "title": 8, "ocr": 16, "asr": 2, "cover_ocr": 4})
    topic_purity: float = 0.6
    query_purity: float = 0.8
    zipf_exponent: float = 1.1
    label_noise: float = 0.05
    w_bias: float = -1.0
    w_match: float = 2.0
    w_interest: float = 2.0
    w_quality: float = 0.8
    user_bias_std: float = 0.3
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.history_caps = tuple(int(c) for c in self.history_caps)
        self.validate()

    def validate(self) -> None:
        positive = ["vocab_size", "n_topics", "topic_vocab", "n_users", "n_docs", "n_queries", "n_sessions", "docs_per_session"]
        for name in positive:
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"data.{name} must be positive, got {getattr(self, name)}")
        reserved = self.n_topics * self.topic_vocab + 2 * self.quality_vocab
        if reserved >= self.vocab_size:
            raise ValueError(f"data.vocab_size={self.vocab_size} too small for {reserved} topic/quality words")
        for name in ("relevant_fraction", "interest_query_prob", "topic_purity", "query_purity", "label_noise", "holdout_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"data.{name} must lie in [0, 1], got {v}")
        if self.interest_topics > self.n_topics:
            raise ValueError("data.interest_topics exceeds n_topics")
        if not self.history_caps or any(c <= 0 for c in self.history_caps):
            raise ValueError("data.history_caps must be positive")
        for name, cap in self.max_lengths.items():
            if name not in DEFAULT_MAX_LENGTHS or cap < 0:
                raise ValueError(f"data.max_lengths has bad entry {name}={cap}")


@dataclass
class Sample:
    uid: int
    qid: int
    query_id: int
    query_tokens: list[int]
    doc_id: int
    doc_features: dict[str, list[int]]
    history: list[int]  # most recent first, longest cap
    label: int
    timestamp: int


@dataclass
class Corpus:
    """Column store of samples plus query and document token tables."""

    uid: np.ndarray
    qid: np.ndarray
    query_id: np.ndarray
    doc_id: np.ndarray
    label: np.ndarray
    timestamp: np.ndarray
    history: np.ndarray  # (n, max_cap), -1 padded
    queries: dict[int, list[int]]
    docs: dict[int, dict[str, list[int]]]
    history_caps: tuple[int, ...]
    # latent generator state; absent after import
    latent: dict | None = None

    def __len__(self) -> int:
        return len(self.uid)

    def sample(self, i: int) -> Sample:
        hist = self.history[i]
        return Sample(
            int(self.uid[i]),
            int(self.qid[i]),
            int(self.query_id[i]),
            list(self.queries[int(self.query_id[i])]),
            int(self.doc_id[i]),
            {k: list(v) for k, v in self.docs[int(self.doc_id[i])].items()},
            [int(x) for x in hist[hist >= 0]],
            int(self.label[i]),
            int(self.timestamp[i]),
        )

    def sessions(self) -> list[np.ndarray]:
        """Sample indices grouped by qid, in order of first appearance."""
        _, start = np.unique(self.qid, return_index=True)
        start = np.sort(start)
        ends = np.append(start[1:], len(self.qid))
        return [np.arange(a, b) for a, b in zip(start, ends)]

    def temporal_split(self, holdout_fraction: float = 0.1) -> tuple[list[np.ndarray], list[np.ndarray]]:
        sess = self.sessions()
        n_eval = int(round(holdout_fraction * len(sess)))
        return sess[: len(sess) - n_eval], sess[len(sess) - n_eval :]

    def equals(self, other: "Corpus") -> bool:
        arrays = ("uid", "qid", "query_id", "doc_id", "label", "timestamp", "history")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and self.queries == other.queries
            and self.docs == other.docs
            and tuple(self.history_caps) == tuple(other.history_caps)
        )


def _zipf_weights(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** (-s)
    return w / w.sum()


def _lengths(rng: np.random.Generator, mean: float, cap: int, minimum: int) -> int:
    return int(np.clip(rng.poisson(mean), minimum, cap))


def build_history(timeline: Sequence[tuple[int, int]], t: int, caps: Sequence[int]) -> list[list[int]]:
    """Most recent doc ids strictly before ``t``, most-recent-first, one list per cap.

    ``timeline`` is ``(timestamp, doc_id)`` sorted by timestamp.
    """
    cut = bisect.bisect_left([ts for ts, _ in timeline], t)
    past = [doc for _, doc in timeline[:cut]][::-1]
    return [past[:cap] for cap in caps]


def generate_corpus(config: SyntheticConfig) -> Corpus:
    c = config
    rng = np.random.default_rng(c.seed)
    n_topic_words = c.n_topics * c.topic_vocab
    good_words = np.arange(n_topic_words, n_topic_words + c.quality_vocab)
    bad_words = good_words + c.quality_vocab
    noise_lo = n_topic_words + 2 * c.quality_vocab
    ml, mean_len = c.max_lengths, c.mean_lengths

    def topic_tokens(topic: int, n: int, purity: float) -> list[int]:
        use_topic = rng.random(n) < purity
        topic_w = topic * c.topic_vocab + rng.integers(0, c.topic_vocab, n)
        noise_w = rng.integers(noise_lo, c.vocab_size, n)
        return np.where(use_topic, topic_w, noise_w).astype(int).tolist()

    # documents
    doc_topic = rng.integers(0, c.n_topics, c.n_docs)
    doc_quality = rng.normal(0.0, 1.0, c.n_docs)
    docs: dict[int, dict[str, list[int]]] = {}
    for d in range(c.n_docs):
        feats = {}
        for name in DOC_FEATURES:
            n = _lengths(rng, mean_len[name], ml[name], 1 if name == "title" else 0)
            feats[name] = topic_tokens(int(doc_topic[d]), n, c.topic_purity)
        # quality markers overwrite the head of the OCR text
        k = min(int(round(abs(doc_quality[d]) * 2)), len(feats["ocr"]))
        if k:
            pool = good_words if doc_quality[d] > 0 else bad_words
            feats["ocr"][:k] = rng.choice(pool, k).astype(int).tolist()
        docs[d] = feats
    topic_docs = [np.flatnonzero(doc_topic == t) for t in range(c.n_topics)]
    topic_pop = [_zipf_weights(len(ds), c.zipf_exponent) for ds in topic_docs]

    # queries
    query_topic = np.arange(c.n_queries) % c.n_topics
    queries = {
        qi: topic_tokens(int(query_topic[qi]), _lengths(rng, mean_len["query"], ml["query"], 1), c.query_purity)
        for qi in range(c.n_queries)
    }
    topic_queries = [np.flatnonzero(query_topic == t) for t in range(c.n_topics)]

    # users
    interests = np.stack([rng.choice(c.n_topics, c.interest_topics, replace=False) for _ in range(c.n_users)])
    user_bias = rng.normal(0.0, c.user_bias_std, c.n_users)

    def draw_docs(topic: int, n: int, exclude: set) -> list[int]:
        out = []
        ds, w = topic_docs[topic], topic_pop[topic]
        if len(ds) == 0:
            return out
        tries = 0
        while len(out) < n and tries < 50 * n:
            tries += 1
            doc = int(ds[rng.choice(len(ds), p=w)])
            if doc not in exclude:
                exclude.add(doc)
                out.append(doc)
        return out

    cols = {k: [] for k in ("uid", "qid", "query_id", "doc_id", "label", "timestamp")}
    for s in range(c.n_sessions):
        u = int(rng.integers(0, c.n_users))
        if rng.random() < c.interest_query_prob:
            t_q = int(rng.choice(interests[u]))
        else:
            t_q = int(rng.integers(0, c.n_topics))
        q = int(rng.choice(topic_queries[t_q]))
        n_rel = int(round(c.relevant_fraction * c.docs_per_session))
        chosen: set = set()
        session_docs = draw_docs(t_q, n_rel, chosen)
        while len(session_docs) < c.docs_per_session:
            other = int(rng.integers(0, c.n_topics - 1))
            other += other >= t_q
            session_docs += draw_docs(other, 1, chosen)
        rng.shuffle(session_docs)
        for d in session_docs:
            t_d = doc_topic[d]
            logit = (
                c.w_bias
                + c.w_match * (t_d == t_q)
                + c.w_interest * (t_d in interests[u])
                + c.w_quality * doc_quality[d]
                + user_bias[u]
            )
            y = int(rng.random() < 1.0 / (1.0 + np.exp(-logit)))
            if rng.random() < c.label_noise:
                y = 1 - y
            cols["uid"].append(u)
            cols["qid"].append(s)
            cols["query_id"].append(q)
            cols["doc_id"].append(d)
            cols["label"].append(y)
            cols["timestamp"].append(s)

    arrays = {k: np.asarray(v, dtype=np.int64) for k, v in cols.items()}
    history = _histories(arrays["uid"], arrays["doc_id"], arrays["label"], arrays["timestamp"], max(c.history_caps))
    used_docs = set(arrays["doc_id"].tolist())
    docs = {d: f for d, f in docs.items() if d in used_docs}
    used_queries = set(arrays["query_id"].tolist())
    queries = {q: t for q, t in queries.items() if q in used_queries}
    latent = {
        "doc_topic": doc_topic,
        "doc_quality": doc_quality,
        "query_topic": query_topic,
        "interests": interests,
        "user_bias": user_bias,
    }
    return Corpus(
        arrays["uid"],
        arrays["qid"],
        arrays["query_id"],
        arrays["doc_id"],
        arrays["label"],
        arrays["timestamp"],
        history,
        queries,
        docs,
        tuple(c.history_caps),
        latent,
    )


def _histories(uid, doc_id, label, timestamp, cap: int) -> np.ndarray:
    """Clicked docs per user strictly before each sample's timestamp."""
    n = len(uid)
    out = np.full((n, cap), -1, dtype=np.int64)
    timelines: dict[int, list[tuple[int, int]]] = {}
    order = np.argsort(timestamp, kind="stable")
    i = 0
    while i < n:
        t = timestamp[order[i]]
        j = i
        while j < n and timestamp[order[j]] == t:
            j += 1
        block = order[i:j]
        for k in block:
            past = timelines.get(int(uid[k]))
            if past:
                recent = [doc for _, doc in past[-cap:]][::-1]
                out[k, : len(recent)] = recent
        for k in block:
            if label[k] == 1:
                timelines.setdefault(int(uid[k]), []).append((int(t), int(doc_id[k])))
        i = j
    return out


def make_batches(sessions: Iterable[np.ndarray], batch_size: int) -> list[np.ndarray]:
    """Pack whole sessions into batches of at most ``batch_size`` samples.

    A session longer than ``batch_size`` is cut into full batches; its
    remainder opens the next batch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batches: list[np.ndarray] = []
    current: list[np.ndarray] = []
    size = 0
    for sess in sessions:
        sess = np.asarray(sess)
        if size + len(sess) > batch_size and size:
            batches.append(np.concatenate(current))
            current, size = [], 0
        while len(sess) > batch_size:
            batches.append(sess[:batch_size])
            sess = sess[batch_size:]
        if len(sess):
            current.append(sess)
            size += len(sess)
    if size:
        batches.append(np.concatenate(current))
    return batches


# -- plain-text export ------------------------------------------------------------
# One JSON object per line:
#   {"uid", "qid", "query_id", "query_tokens", "doc_id",
#    "features": {"title", "ocr", "asr", "cover_ocr"}, "history", "label", "timestamp"}
# A header line {"format": "lemur-corpus", "version": 1, "history_caps": [...]} precedes the records.

FORMAT_NAME = "lemur-corpus"
FORMAT_VERSION = 1


def export_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "history_caps": list(corpus.history_caps)}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for i in range(len(corpus)):
            s = corpus.sample(i)
            rec = {
                "uid": s.uid,
                "qid": s.qid,
                "query_id": s.query_id,
                "query_tokens": s.query_tokens,
                "doc_id": s.doc_id,
                "features": {k: s.doc_features[k] for k in DOC_FEATURES},
                "history": s.history,
                "label": s.label,
                "timestamp": s.timestamp,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def import_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != FORMAT_NAME:
            raise ValueError(f"{path} is not a {FORMAT_NAME} file")
        caps = tuple(header["history_caps"])
        cap = max(caps)
        cols = {k: [] for k in ("uid", "qid", "query_id", "doc_id", "label", "timestamp")}
        hist_rows, queries, docs = [], {}, {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            for k in cols:
                cols[k].append(int(rec[k]))
            queries.setdefault(int(rec["query_id"]), [int(t) for t in rec["query_tokens"]])
            docs.setdefault(int(rec["doc_id"]), {k: [int(t) for t in rec["features"][k]] for k in DOC_FEATURES})
            row = np.full(cap, -1, dtype=np.int64)
            h = rec["history"][:cap]
            row[: len(h)] = h
            hist_rows.append(row)
    arrays = {k: np.asarray(v, dtype=np.int64) for k, v in cols.items()}
    history = np.stack(hist_rows) if hist_rows else np.zeros((0, cap), dtype=np.int64)
    return Corpus(
        arrays["uid"], arrays["qid"], arrays["query_id"], arrays["doc_id"], arrays["label"], arrays["timestamp"],
        history, queries, docs, caps, None,
    )


def config_to_dict(config: SyntheticConfig) -> dict:
    d = asdict(config)
    d["history_caps"] = list(config.history_caps)
    return d
