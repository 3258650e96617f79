import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lemur.data import (
    SyntheticConfig,
    build_history,
    export_corpus,
    generate_corpus,
    import_corpus,
    make_batches,
)
from lemur.encoder import DEFAULT_MAX_LENGTHS
from lemur.metrics import auc
from lemur.sqdc import build_session_mask

from tiny import tiny_config


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(tiny_config().data)


@pytest.fixture(scope="module")
def desk_corpus():
    return generate_corpus(SyntheticConfig())


def test_default_length_caps():
    assert DEFAULT_MAX_LENGTHS == {"query": 10, "title": 31, "ocr": 124, "asr": 12, "cover_ocr": 12}
    assert SyntheticConfig().max_lengths == DEFAULT_MAX_LENGTHS


def test_same_seed_same_corpus(corpus):
    again = generate_corpus(tiny_config().data)
    assert corpus.equals(again)
    other = tiny_config(data={"seed": 1})
    assert not corpus.equals(generate_corpus(other.data))


def test_feature_lengths_within_caps(desk_corpus):
    caps = SyntheticConfig().max_lengths
    for feats in desk_corpus.docs.values():
        for name, toks in feats.items():
            assert len(toks) <= caps[name]
    assert all(1 <= len(t) <= caps["query"] for t in desk_corpus.queries.values())


def test_tokens_inside_vocab(desk_corpus):
    v = SyntheticConfig().vocab_size
    toks = [t for f in desk_corpus.docs.values() for ts in f.values() for t in ts]
    toks += [t for ts in desk_corpus.queries.values() for t in ts]
    assert min(toks) >= 0 and max(toks) < v


def test_topic_aligned_pairs_click_more(desk_corpus):
    lat = desk_corpus.latent
    aligned = lat["doc_topic"][desk_corpus.doc_id] == lat["query_topic"][desk_corpus.query_id]
    y = desk_corpus.label
    gap = y[aligned].mean() - y[~aligned].mean()
    assert gap > 0.10


def _fit_logistic(x, y, iters=25):
    """Newton-Raphson for a plain logistic regression with intercept."""
    x = np.column_stack([np.ones(len(x)), x])
    w = np.zeros(x.shape[1])
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-x @ w))
        hess = x.T @ (x * (p * (1 - p))[:, None]) + 1e-8 * np.eye(len(w))
        w += np.linalg.solve(hess, x.T @ (y - p))
    return lambda z: np.column_stack([np.ones(len(z)), z]) @ w


def test_topic_overlap_probe_is_learnable(desk_corpus):
    c, lat = desk_corpus, desk_corpus.latent
    d_topic = lat["doc_topic"][c.doc_id]
    feats = np.column_stack(
        [
            d_topic == lat["query_topic"][c.query_id],
            [t in lat["interests"][u] for t, u in zip(d_topic, c.uid)],
        ]
    ).astype(float)
    train, hold = c.temporal_split(0.1)
    tr, ho = np.concatenate(train), np.concatenate(hold)
    model = _fit_logistic(feats[tr], c.label[tr].astype(float))
    shuffled = _fit_logistic(feats[tr], np.random.default_rng(0).permutation(c.label[tr]).astype(float))
    probe, chance = auc(model(feats[ho]), c.label[ho]), auc(shuffled(feats[ho]), c.label[ho])
    assert probe > 0.70
    assert probe - chance > 0.15


def test_history_is_strictly_earlier_clicks(corpus):
    clicks = {}
    for i in range(len(corpus)):
        if corpus.label[i]:
            clicks.setdefault(int(corpus.uid[i]), []).append((int(corpus.timestamp[i]), int(corpus.doc_id[i])))
    for i in range(len(corpus)):
        t, u = corpus.timestamp[i], int(corpus.uid[i])
        hist = corpus.history[i]
        hist = hist[hist >= 0].tolist()
        earlier = [d for ts, d in sorted(clicks.get(u, []), key=lambda c: c[0]) if ts < t][::-1]
        assert hist == earlier[: corpus.history.shape[1]]


def test_popular_docs_repeat(desk_corpus):
    _, counts = np.unique(desk_corpus.doc_id, return_counts=True)
    assert counts.max() > 50 * np.median(counts) or counts.max() > 100


def test_sessions_are_contiguous(corpus):
    sess = corpus.sessions()
    assert sum(len(s) for s in sess) == len(corpus)
    for s in sess:
        assert np.all(corpus.qid[s] == corpus.qid[s[0]])
        assert np.all(np.diff(s) == 1)


def test_temporal_split_keeps_order(corpus):
    train, hold = corpus.temporal_split(0.25)
    assert len(hold) == round(0.25 * len(corpus.sessions()))
    assert corpus.timestamp[np.concatenate(train)].max() < corpus.timestamp[np.concatenate(hold)].min()


def test_invalid_config_rejected():
    with pytest.raises(ValueError, match="vocab_size"):
        SyntheticConfig(vocab_size=0)
    with pytest.raises(ValueError, match="label_noise"):
        SyntheticConfig(label_noise=1.5)
    with pytest.raises(ValueError, match="too small"):
        SyntheticConfig(vocab_size=100)


# -- batching -------------------------------------------------------------------------
def test_two_sessions_fit_one_batch():
    out = make_batches([np.array([0, 1, 2]), np.array([3, 4])], 5)
    assert [b.tolist() for b in out] == [[0, 1, 2, 3, 4]]


def test_oversized_session_splits():
    out = make_batches([np.arange(6)], 5)
    assert [b.tolist() for b in out] == [[0, 1, 2, 3, 4], [5]]


def test_batch_size_must_be_positive():
    with pytest.raises(ValueError):
        make_batches([np.arange(3)], 0)


@settings(max_examples=150)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=20), st.integers(1, 16))
def test_sessions_never_split_unless_oversized(sizes, b):
    sessions, start = [], 0
    for n in sizes:
        sessions.append(np.arange(start, start + n))
        start += n
    batches = make_batches(sessions, b)
    assert np.array_equal(np.concatenate(batches), np.arange(start))
    assert all(1 <= len(x) <= b for x in batches)
    where = {int(i): k for k, batch in enumerate(batches) for i in batch}
    for s in sessions:
        if len(s) <= b:
            assert len({where[int(i)] for i in s}) == 1


def test_batches_give_valid_session_masks(corpus):
    train, _ = corpus.temporal_split(0.1)
    for batch in make_batches(train, 8)[:20]:
        q = corpus.qid[batch]
        mask = build_session_mask(q).astype(bool)
        assert np.array_equal(mask, (q[:, None] != q[None, :]) | np.eye(len(q), dtype=bool))
        # same-query rows sit in one contiguous block
        assert len(np.unique(q)) == np.count_nonzero(np.diff(q)) + 1


# -- history -----------------------------------------------------------------------------
def test_new_user_empty_history():
    assert build_history([], 5, [2, 4]) == [[], []]


def test_history_truncates_to_latest():
    timeline = [(1, 10), (2, 11), (3, 12)]
    assert build_history(timeline, 4, [2]) == [[12, 11]]


def test_history_excludes_current_timestamp():
    timeline = [(1, 10), (4, 11)]
    assert build_history(timeline, 4, [5]) == [[10]]


# -- export / import ----------------------------------------------------------------------
def test_round_trip(tmp_path, corpus):
    path = tmp_path / "c.jsonl"
    export_corpus(corpus, path)
    back = import_corpus(path)
    assert back.equals(corpus)
    assert back.latent is None
    export_corpus(back, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()


def test_import_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"format": "other"}\n')
    with pytest.raises(ValueError, match="not a lemur-corpus"):
        import_corpus(path)
