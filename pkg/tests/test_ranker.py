import math

import numpy as np
import pytest

from lemur.numerics import ParamStore, Tensor, finite_difference_check
from lemur.ranker import LOGIT_CLAMP, FeatureBundle, Ranker, bce_loss, joint_loss

DIMS = dict(user_id_emb=2, doc_id_emb=2, query_id_emb=2, q_emb=3, d_emb=3, decoder_out=4, sim_feats=4, dense=2)


def bundle(rng, b=3, grad=False):
    return FeatureBundle(**{k: Tensor(rng.normal(size=(b, n)), requires_grad=grad) for k, n in DIMS.items()})


def ranker(seed=0, hidden=(5, 4)):
    store = ParamStore(np.random.default_rng(seed))
    return store, Ranker(store, "r", sum(DIMS.values()), hidden)


def test_zero_weights_give_half(rng):
    store, r = ranker()
    for p in store:
        p.data[...] = 0.0
    out = r.fuse_and_score(bundle(rng))
    np.testing.assert_array_equal(out.y_hat.data, 0.5)


def test_deterministic(rng):
    _, r = ranker()
    b = bundle(rng)
    np.testing.assert_array_equal(r.fuse_and_score(b).logit.data, r.fuse_and_score(b).logit.data)


def test_dimension_mismatch(rng):
    store = ParamStore(rng)
    r = Ranker(store, "r", 7)
    with pytest.raises(ValueError):
        r.fuse_and_score(bundle(rng))


def test_fused_dims(rng):
    b = bundle(rng)
    assert b.dims() == DIMS
    assert b.fused().shape == (3, sum(DIMS.values()))


def test_every_component_gets_gradient(rng):
    _, r = ranker(seed=4)
    b = bundle(rng, grad=True)
    r.fuse_and_score(b).logit.sum().backward()
    for name, t in b.components():
        assert np.abs(t.grad).sum() > 0, name


def test_component_gradients_finite_difference(rng):
    store, r = ranker(seed=6)
    b = bundle(rng, b=4, grad=True)
    y = np.array([1.0, 0.0, 1.0, 0.0])
    params = [t for _, t in b.components()] + list(store)
    assert finite_difference_check(lambda: bce_loss(r.fuse_and_score(b).y_hat, y), params) < 1e-4


def test_logit_clamp_keeps_probability_interior(rng):
    store, r = ranker()
    store["r.fc2.b"].data[...] = 1e4
    out = r.fuse_and_score(bundle(rng))
    assert (out.logit.data == LOGIT_CLAMP).all()
    assert (out.y_hat.data < 1.0).all()


def test_bce_examples():
    assert float(bce_loss(Tensor(np.full(4, 0.5)), [1, 0, 1, 0]).data) == pytest.approx(math.log(2), rel=1e-15)
    perfect = float(bce_loss(Tensor(np.array([1 - 1e-9, 1e-9])), [1, 0]).data)
    assert 0 < perfect < 1e-8
    ref = (-math.log(0.8) - math.log(0.7)) / 2
    assert float(bce_loss(Tensor(np.array([0.8, 0.3])), [1, 0]).data) == pytest.approx(ref, rel=1e-15)


def test_bce_boundary_errors():
    with pytest.raises(ValueError):
        bce_loss(Tensor(np.array([1.0, 0.5])), [1, 0])
    with pytest.raises(ValueError):
        bce_loss(Tensor(np.array([0.0])), [0])


def test_bce_termwise_oracle():
    r = np.random.default_rng(3)
    for _ in range(100):
        n = int(r.integers(1, 20))
        p = r.uniform(1e-6, 1 - 1e-6, n)
        y = r.integers(0, 2, n)
        ref = -sum(yi * math.log(pi) + (1 - yi) * math.log(1 - pi) for pi, yi in zip(p, y)) / n
        assert abs(float(bce_loss(Tensor(p), y).data) - ref) < 1e-12


def test_joint_loss():
    a, b = Tensor(np.array(0.7)), Tensor(np.array(2.5))
    assert float(joint_loss(a, b, 0.0).data) == 0.7
    assert float(joint_loss(a, Tensor(np.array(0.0)), 1.0).data) == 0.7
    lam = 0.3
    diff = float(joint_loss(a, b, lam).data) - float(joint_loss(a, Tensor(np.array(0.0)), lam).data)
    assert diff == pytest.approx(lam * 2.5, rel=1e-15)
    with pytest.raises(ValueError):
        joint_loss(a, b, -1.0)
