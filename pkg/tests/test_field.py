import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mpcplan.mpc import _fallback, field

P = (1 << 61) - 1
elems = st.integers(0, P - 1)


def oracle_mul(a, b):
    return [(int(x) * int(y)) % P for x, y in zip(a, b)]


@given(st.lists(st.tuples(elems, elems), min_size=1, max_size=40))
def test_mul_matches_python_ints(pairs):
    a = np.array([x for x, _ in pairs], dtype=np.uint64)
    b = np.array([y for _, y in pairs], dtype=np.uint64)
    want = oracle_mul(a, b)
    assert _fallback.mul_mod(a, b).tolist() == want
    if field.BACKEND == "compiled":
        from mpcplan.mpc import _fieldops

        assert _fieldops.mul_mod(a, b).tolist() == want


@given(hnp.arrays(np.uint64, st.tuples(st.integers(0, 30), st.integers(1, 4)), elements=elems))
def test_sum_rows_matches_python_ints(a):
    want = [sum(int(v) for v in a[:, j]) % P for j in range(a.shape[1])]
    assert field.sum_rows(a).tolist() == want
    assert _fallback.sum_mod(a).tolist() == want


def test_mul_edge_values(backend):
    edge = np.array([0, 1, 2, P - 1, P - 2, 1 << 60, (1 << 32) - 1, 1 << 32], dtype=np.uint64)
    a, b = np.meshgrid(edge, edge)
    got = field.mul(a.ravel(), b.ravel())
    assert got.tolist() == oracle_mul(a.ravel(), b.ravel())


def test_mul_broadcasts(backend):
    a = np.arange(12, dtype=np.uint64).reshape(4, 3)
    b = np.array([[2], [3], [4], [5]], dtype=np.uint64)
    assert field.mul(a, b).tolist() == (a * b).tolist()


def test_accumulate_segmented_scan(backend):
    flags = np.array([0, 1, 1, 0, 1], dtype=np.uint64)
    vals = np.array([[1, 10], [2, 20], [3, 30], [4, 40], [5, 50]], dtype=np.uint64)
    assert field.accumulate(flags, vals).tolist() == [[1, 10], [3, 30], [6, 60], [4, 40], [9, 90]]


def test_accumulate_empty(backend):
    out = field.accumulate(np.zeros(0, dtype=np.uint64), np.zeros((0, 2), dtype=np.uint64))
    assert out.shape == (0, 2)


@given(st.lists(st.integers(-(2**60) + 1, 2**60 - 1), max_size=30))
def test_encode_decode_roundtrip(vals):
    assert field.decode(field.encode(vals)).tolist() == vals


def test_decode_window_edges():
    half = (P - 1) // 2
    assert field.decode(np.array([half, half + 1], dtype=np.uint64)).tolist() == [half, -half]


@given(st.lists(elems, max_size=20), st.integers(0, 2**32))
def test_split_combine(vals, seed):
    v = np.array(vals, dtype=np.uint64)
    shares = field.split(v, np.random.default_rng(seed))
    assert len(shares) == 3
    assert field.combine(shares).tolist() == vals


def test_zero_shares_sum_to_zero(rng):
    shares = field.split(np.zeros(1, dtype=np.uint64), rng)
    assert sum(int(s[0]) for s in shares) % P == 0


def test_sub_and_neg():
    a = np.array([0, 5, P - 1], dtype=np.uint64)
    b = np.array([1, 5, 3], dtype=np.uint64)
    assert field.sub(a, b).tolist() == [(int(x) - int(y)) % P for x, y in zip(a, b)]
    assert field.neg(a).tolist() == [0, P - 5, 1]


def test_use_backend_switches_kernels():
    old = field.use_backend("python")
    try:
        assert field.BACKEND == "python"
        assert field.mul is _fallback.mul_mod
    finally:
        field.use_backend(old)
    assert field.BACKEND == old


@pytest.mark.skipif(field.BACKEND != "compiled", reason="extension not built")
def test_backends_agree_on_random_arrays(rng):
    from mpcplan.mpc import _fieldops

    a = field.random_elems(rng, (500, 3))
    b = field.random_elems(rng, (500, 3))
    assert np.array_equal(_fieldops.mul_mod(a, b), _fallback.mul_mod(a, b))
    assert np.array_equal(_fieldops.sum_mod(a), _fallback.sum_mod(a))
    f = rng.integers(0, 2, 500).astype(np.uint64)
    assert np.array_equal(_fieldops.accumulate(f, a), _fallback.accumulate(f, a))
