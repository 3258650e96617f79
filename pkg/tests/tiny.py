"""Very small configurations for gradient checks and fast pipeline tests."""

from lemur.config import RunConfig, from_dict, to_dict


def tiny_config(**sections) -> RunConfig:
    raw = to_dict(RunConfig())
    raw["data"].update(
        vocab_size=64,
        n_topics=3,
        topic_vocab=4,
        quality_vocab=2,
        n_users=6,
        n_docs=20,
        n_queries=6,
        n_sessions=24,
        docs_per_session=4,
        interest_topics=2,
        history_caps=[2, 4],
        max_lengths={"query": 3, "title": 3, "ocr": 4, "asr": 2, "cover_ocr": 2},
        mean_lengths={"query": 2, "title": 2, "ocr": 2, "asr": 1, "cover_ocr": 1},
    )
    enc = dict(layers=1, model_dim=4, heads=2, vocab_size=64, output_dim=4)
    raw["query_encoder"].update(enc, max_positions=4)
    raw["doc_encoder"].update(enc, max_positions=16)
    raw["train"].update(batch_size=8, id_dim=2, ranker_hidden=[6, 4], steps=10, report_every=5)
    for name, values in sections.items():
        raw[name].update(values)
    return from_dict(raw)


def small_config(**sections) -> RunConfig:
    """A few hundred sessions; quick enough for multi-step training tests."""
    raw = to_dict(RunConfig())
    raw["data"].update(n_users=40, n_docs=150, n_queries=32, n_sessions=120, history_caps=[4, 8])
    raw["query_encoder"].update(layers=1, model_dim=8, output_dim=8)
    raw["doc_encoder"].update(layers=1, model_dim=8, output_dim=8)
    raw["train"].update(batch_size=16, steps=20, report_every=5, id_dim=4, ranker_hidden=[16, 8])
    for name, values in sections.items():
        raw[name].update(values)
    return from_dict(raw)
