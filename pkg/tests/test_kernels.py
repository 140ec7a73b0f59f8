import numpy as np
import pytest

from collabloc import _kernels_py, kernels

compiled = pytest.importorskip("collabloc._kernels")


def ragged(rng, rows, vocab):
    ids, mw, offsets = [], [], [0]
    for _ in range(rows):
        k = int(rng.integers(0, 16))
        row = np.sort(rng.choice(vocab, size=k, replace=False))
        ids.extend(row)
        mw.extend(10 ** (rng.uniform(-90, -30, size=k) / 10))
        offsets.append(len(ids))
    return np.array(ids, dtype=np.int64), np.array(mw, dtype=np.float64), np.array(offsets, dtype=np.int64)


@pytest.mark.parametrize("seed", range(20))
def test_batch_cosine_backends_agree(seed):
    rng = np.random.default_rng(seed)
    ids, mw, offsets = ragged(rng, 60, 40)
    q_ids = np.sort(rng.choice(40, size=int(rng.integers(0, 16)), replace=False)).astype(np.int64)
    q_mw = 10 ** (rng.uniform(-90, -30, size=len(q_ids)) / 10)
    a = compiled.batch_cosine(q_ids, q_mw, ids, mw, offsets)
    b = _kernels_py.batch_cosine(q_ids, q_mw, ids, mw, offsets)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert np.all((a >= 0) & (a <= 1))


def test_batch_cosine_empty_inputs():
    empty = np.zeros(0, dtype=np.int64)
    for impl in (compiled, _kernels_py):
        out = impl.batch_cosine(empty, np.zeros(0), empty, np.zeros(0), np.array([0, 0], dtype=np.int64))
        assert out.tolist() == [0.0]


@pytest.mark.parametrize("seed", range(10))
def test_match_counts_backends_agree(seed):
    rng = np.random.default_rng(seed)
    train = rng.integers(0, 3, size=(int(rng.integers(0, 30)), 5)).astype(np.int64)
    query = rng.integers(0, 3, size=5).astype(np.int64)
    assert compiled.match_counts(train, query).tolist() == _kernels_py.match_counts(train, query).tolist()


def test_selected_backend():
    assert kernels.BACKEND in ("cython", "python")
