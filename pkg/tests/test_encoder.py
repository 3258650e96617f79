import numpy as np
import pytest

from lemur import numerics as nx
from lemur.encoder import (
    DEFAULT_MAX_LENGTHS,
    TYPE_CLS,
    TYPE_IDS,
    TYPE_SEP,
    EncoderConfig,
    TokenFeature,
    TransformerEncoder,
    build_doc_input,
    build_query_input,
    cls_id,
    pad_batch,
    sep_id,
)
from lemur.numerics import ParamStore, finite_difference_check

V = 50
CLS, SEP = cls_id(V), sep_id(V)


def doc(title=(), ocr=(), asr=(), cover=()):
    feats = [
        TokenFeature("title", list(title), 31),
        TokenFeature("ocr", list(ocr), 124),
        TokenFeature("asr", list(asr), 12),
        TokenFeature("cover_ocr", list(cover), 12),
    ]
    return build_doc_input(feats, V)


def small_encoder(seed=0, **kw):
    cfg = EncoderConfig(**{"layers": 2, "model_dim": 8, "heads": 2, "vocab_size": V, "output_dim": 4, "max_positions": 24, **kw})
    store = ParamStore(np.random.default_rng(seed))
    return store, TransformerEncoder(store, "enc", cfg)


def test_table_caps():
    assert DEFAULT_MAX_LENGTHS == {"query": 10, "title": 31, "ocr": 124, "asr": 12, "cover_ocr": 12}


def test_layout_title_only():
    assert doc(title=[5, 6]).token_ids.tolist() == [CLS, 5, 6, SEP, SEP, SEP]


def test_layout_all_empty():
    x = doc()
    assert x.token_ids.tolist() == [CLS, SEP, SEP, SEP]
    assert x.positions.tolist() == [0, 1, 2, 3]
    assert x.mask.all()


def test_layout_types():
    x = doc(title=[1], ocr=[2, 3])
    t, o = TYPE_IDS["title"], TYPE_IDS["ocr"]
    assert x.types.tolist() == [TYPE_CLS, t, TYPE_SEP, o, o, TYPE_SEP, TYPE_SEP]


def test_type_sequence_fixed_for_layout():
    a, b = doc(title=[1, 2], asr=[3]), doc(title=[9, 8], asr=[7])
    assert a.types.tolist() == b.types.tolist()


def test_over_length_names_feature():
    with pytest.raises(ValueError, match="ocr"):
        TokenFeature("ocr", [1] * 125, 124)


def test_bad_feature_order_and_token_range():
    feats = [TokenFeature(n, [], 5) for n in ("ocr", "title", "asr", "cover_ocr")]
    with pytest.raises(ValueError):
        build_doc_input(feats, V)
    with pytest.raises(ValueError, match="query"):
        build_query_input([V], V)


def test_query_layout():
    x = build_query_input([3, 4], V)
    assert x.token_ids.tolist() == [CLS, 3, 4]
    assert x.types.tolist() == [TYPE_CLS, TYPE_IDS["query"], TYPE_IDS["query"]]


def test_model_dim_divisible_by_heads():
    with pytest.raises(ValueError):
        EncoderConfig(model_dim=10, heads=3)


def test_deterministic_and_permutation_equivariant():
    _, enc = small_encoder()
    inputs = [doc(title=[1, 2], ocr=[3]), doc(title=[4]), doc(asr=[5, 6, 7])]
    a = enc.encode(inputs).data
    b = enc.encode(inputs).data
    np.testing.assert_array_equal(a, b)
    perm = [2, 0, 1]
    c = enc.encode([inputs[i] for i in perm]).data
    np.testing.assert_allclose(c, a[perm], rtol=0, atol=1e-14)


def test_output_dim_and_production_profile_dim():
    _, enc = small_encoder()
    assert enc.encode([doc(title=[1])]).shape == (1, 4)
    from lemur.config import RunConfig

    cfg = RunConfig.production()
    assert cfg.doc_encoder.output_dim == 128 and cfg.query_encoder.output_dim == 128
    assert cfg.query_encoder.layers == 2 and cfg.doc_encoder.layers == 4


def test_ocr_token_sensitivity():
    _, enc = small_encoder()
    a = enc.encode([doc(title=[1], ocr=[2, 3])]).data
    b = enc.encode([doc(title=[1], ocr=[2, 4])]).data
    assert np.linalg.norm(a - b) > 0


@pytest.mark.parametrize("pre_norm", [True, False])
def test_padding_invariance(pre_norm):
    _, enc = small_encoder(pre_norm=pre_norm)
    x = doc(title=[1, 2], ocr=[3])
    tight = enc.forward(pad_batch([x], V)).data
    loose = enc.forward(pad_batch([x], V, length=20)).data
    np.testing.assert_allclose(loose, tight, rtol=0, atol=1e-10)


def test_cls_readout_uses_context():
    # swapping a non-cls token must move the cls output, so the readout is not a self-only path
    _, enc = small_encoder()
    a = enc.encode([build_query_input([1, 2, 3], V)]).data
    b = enc.encode([build_query_input([1, 2, 9], V)]).data
    assert not np.allclose(a, b)


def test_bidirectional_every_token_gets_gradient():
    store, enc = small_encoder(seed=3)
    x = doc(title=[1, 2], ocr=[3, 4], asr=[5], cover=[6])
    store.zero_grad()
    enc.encode([x]).sum().backward()
    g = store["enc.tok_emb"].grad
    for tok in x.token_ids:
        assert np.abs(g[tok]).sum() > 0, tok


def test_counter_counts_rows():
    _, enc = small_encoder()
    enc.encode([doc(), doc(title=[1])])
    assert enc.invocations == 2


def test_gradient_check_token_table():
    store, enc = small_encoder(seed=5, layers=2, model_dim=8, output_dim=4)
    inputs = [doc(title=[1, 2], ocr=[3]), build_query_input([4, 5], V)]
    w = np.random.default_rng(0).normal(size=(2, 4))
    table = store["enc.tok_emb"]
    used = sorted({int(t) for x in inputs for t in x.token_ids})
    sub = nx.Tensor(table.data[used].copy(), requires_grad=True)

    def f():
        full = table.data.copy()
        t = nx.Tensor(full)
        # splice the probed rows so finite differences touch only them
        rows = np.zeros(len(full), dtype=np.int64)
        rows[used] = np.arange(len(used))
        spliced = nx.where(np.isin(np.arange(len(full)), used)[:, None], nx.embedding(sub, rows), t)
        enc.tok_emb = spliced
        return (enc.encode(inputs) * w).sum()

    try:
        err = finite_difference_check(f, [sub])
    finally:
        enc.tok_emb = table
    assert err < 1e-4


def test_gradient_check_all_encoder_params():
    store, enc = small_encoder(seed=9, layers=2, model_dim=4, heads=2, output_dim=3, max_positions=12)
    inputs = [build_query_input([1, 2, 3], V), build_query_input([4], V)]
    w = np.random.default_rng(1).normal(size=(2, 3))
    params = [p for n, p in store.items() if n != "enc.tok_emb" and n != "enc.pos_emb"]
    assert finite_difference_check(lambda: (enc.encode(inputs) * w).sum(), params) < 1e-4
