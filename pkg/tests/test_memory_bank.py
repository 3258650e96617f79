import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lemur.memory_bank import MemoryBank


def test_round_trip_bitwise(rng):
    bank = MemoryBank(4)
    v = rng.normal(size=4)
    bank.put(3, v, step=1)
    out = bank.get(3)
    assert out.tobytes() == v.tobytes()
    v[0] = 99.0  # the bank holds its own copy
    assert bank.get(3)[0] != 99.0


def test_later_step_wins_and_older_ignored():
    bank = MemoryBank(2)
    bank.put(1, [1.0, 1.0], step=5)
    bank.put(1, [7.0, 7.0], step=7)
    np.testing.assert_array_equal(bank.get(1), [7.0, 7.0])
    bank.put(1, [3.0, 3.0], step=6)
    np.testing.assert_array_equal(bank.get(1), [7.0, 7.0])
    assert bank.entry(1).written_step == 7


def test_equal_step_lowest_worker_wins():
    for order in ([2, 0], [0, 2]):
        bank = MemoryBank(1)
        for w in order:
            bank.put(9, [float(w)], step=5, worker=w)
        assert bank.get(9)[0] == 0.0
        assert bank.entry(9).writer == 0


def test_dimension_and_finiteness_errors():
    bank = MemoryBank(3)
    with pytest.raises(ValueError):
        bank.put(1, [1.0, 2.0], step=0)
    with pytest.raises(ValueError):
        bank.put(1, [1.0, np.nan, 2.0], step=0)


def test_entries_are_immutable(rng):
    bank = MemoryBank(2)
    bank.put(0, [1.0, 2.0], step=0)
    with pytest.raises(ValueError):
        bank.get(0)[0] = 5.0


def test_get_sequence_coverage():
    bank = MemoryBank(2)
    for i in (1, 2, 3):
        bank.put(i, [float(i), 0.0], step=0)
    look = bank.get_sequence([1, 2, 3, 4])
    assert look.coverage == 0.75
    assert look.present.tolist() == [True, True, True, False]
    np.testing.assert_array_equal(look.embeddings[3], [0.0, 0.0])
    assert bank.get_sequence([]).coverage == 1.0
    none = bank.get_sequence([7, 8])
    assert none.coverage == 0.0 and not none.embeddings.any()


def test_lookup_batch_padding():
    bank = MemoryBank(2)
    bank.put(5, [1.0, 2.0], step=0)
    emb, present = bank.lookup_batch(np.array([[5, -1], [6, 5]]))
    assert emb.shape == (2, 2, 2)
    assert present.tolist() == [[True, False], [False, True]]
    np.testing.assert_array_equal(emb[1, 1], [1.0, 2.0])


def test_staleness_probe(rng):
    bank = MemoryBank(3)
    vs = rng.normal(size=(4, 3))
    bank.put_many(range(4), vs, step=0)
    assert bank.staleness_probe(list(range(4)), vs) == pytest.approx(1.0, abs=1e-15)
    assert bank.staleness_probe(list(range(4)), -vs) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(ValueError):
        bank.staleness_probe([], vs[:0])
    with pytest.raises(KeyError):
        bank.staleness_probe([42], vs[:1])


def test_sweep_window_and_capacity():
    bank = MemoryBank(1, capacity=10, window=5)
    bank.put(0, [0.0], step=10)
    bank.put(1, [1.0], step=12)
    assert bank.sweep(12) == 0
    bank.put(2, [2.0], step=3)
    assert bank.sweep(12) == 1 and 2 not in bank
    small = MemoryBank(1, capacity=2)
    for i, s in enumerate([4, 2, 9]):
        small.put(i, [0.0], step=s)
    assert small.sweep(9) == 1
    assert sorted(small.doc_ids()) == [0, 2]


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 30)), max_size=40), st.integers(0, 10), st.integers(1, 15))
def test_sweep_invariants(writes, window, capacity):
    bank = MemoryBank(1, capacity=capacity, window=window)
    for doc, step in writes:
        bank.put(doc, [float(step)], step=step)
    now = max((s for _, s in writes), default=0)
    bank.sweep(now)
    assert len(bank) <= capacity
    for doc in bank.doc_ids():
        assert bank.entry(doc).written_step >= now - window


def test_written_step_monotone_per_doc():
    bank = MemoryBank(1)
    r = np.random.default_rng(0)
    last = {}
    for _ in range(200):
        doc, step = int(r.integers(5)), int(r.integers(50))
        bank.put(doc, [0.0], step=step, worker=int(r.integers(3)))
        assert bank.entry(doc).written_step >= last.get(doc, -1)
        last[doc] = bank.entry(doc).written_step


def test_coverage_monotone_on_replayed_stream():
    bank = MemoryBank(1)
    stream = [[1, 2, 3], [3, 4], [5], [1, 6]]
    seq = [1, 3, 4, 6, 9]
    prev = 0.0
    for epoch in range(2):
        for step, batch in enumerate(stream):
            bank.put_many(batch, np.ones((len(batch), 1)), step=epoch * 10 + step)
            cov = bank.get_sequence(seq).coverage
            assert cov >= prev
            prev = cov


def test_snapshot_round_trip(rng):
    bank = MemoryBank(3)
    bank.put(4, rng.normal(size=3), step=2, worker=1)
    bank.put(1, rng.normal(size=3), step=5, worker=0)
    clone = MemoryBank.from_snapshot(bank.snapshot())
    for d in (1, 4):
        a, b = clone.entry(d), bank.entry(d)
        assert (a.written_step, a.writer) == (b.written_step, b.writer)
        assert a.embedding.tobytes() == b.embedding.tobytes()


def test_concurrent_readers_never_see_torn_vectors():
    dim = 64
    bank = MemoryBank(dim)
    bank.put(0, np.zeros(dim), step=0)
    stop = threading.Event()
    torn = []

    def writer():
        for step in range(1, 2000):
            bank.put(0, np.full(dim, float(step)), step=step)
        stop.set()

    def reader():
        while not stop.is_set():
            v = bank.get(0)
            if not (v == v[0]).all():
                torn.append(v.copy())

    threads = [threading.Thread(target=writer)] + [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not torn
