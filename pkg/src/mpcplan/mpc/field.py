"""Arithmetic in the prime field p = 2**61 - 1 and the backend switch.

Signed 64-bit values are embedded as ``x mod p`` and decoded through the
window ``(-p/2, p/2]``. Values outside that window wrap; keeping
intermediate results small enough is the caller's job.

The multiplication, column-sum and accumulate kernels come from the
compiled ``_fieldops`` extension when it is importable and from
``_fallback`` otherwise. Setting ``MPCPLAN_PURE_PYTHON=1`` forces the
fallback.
"""
import os

import numpy as np

from . import _fallback

P = (1 << 61) - 1
HALF = (P - 1) // 2
_P = np.uint64(P)


def _load_backend():
    if os.environ.get("MPCPLAN_PURE_PYTHON"):
        return _fallback, "python"
    try:
        from . import _fieldops
    except ImportError:
        return _fallback, "python"
    return _fieldops, "compiled"


_kernels, BACKEND = _load_backend()


def use_backend(name):
    """Switch kernels at runtime ("compiled" or "python"); returns the old name."""
    global _kernels, BACKEND, mul, sum_rows, accumulate
    old = BACKEND
    if name == "python":
        _kernels, BACKEND = _fallback, "python"
    else:
        from . import _fieldops

        _kernels, BACKEND = _fieldops, "compiled"
    mul, sum_rows, accumulate = _kernels.mul_mod, _kernels.sum_mod, _kernels.accumulate
    return old


mul = _kernels.mul_mod
sum_rows = _kernels.sum_mod
accumulate = _kernels.accumulate


def encode(values):
    v = np.asarray(values, dtype=np.int64)
    return np.where(v < 0, (v + np.int64(P)).astype(np.uint64), v.astype(np.uint64)).astype(np.uint64)


def decode(elems):
    e = np.asarray(elems, dtype=np.uint64)
    return np.where(e > np.uint64(HALF), e.astype(np.int64) - np.int64(P), e.astype(np.int64))


def add(a, b):
    s = np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)
    return np.where(s >= _P, s - _P, s)


def neg(a):
    a = np.asarray(a, dtype=np.uint64)
    return np.where(a == 0, a, _P - a)


def sub(a, b):
    return add(a, neg(b))


def random_elems(rng, shape):
    return rng.integers(0, P, size=shape, dtype=np.uint64)


def split(values, rng, parties=3):
    """Additive shares of field elements: ``parties`` arrays summing to ``values``."""
    values = np.asarray(values, dtype=np.uint64)
    shares = [random_elems(rng, values.shape) for _ in range(parties - 1)]
    last = values
    for s in shares:
        last = sub(last, s)
    return shares + [last]


def combine(shares):
    out = np.zeros_like(np.asarray(shares[0], dtype=np.uint64))
    for s in shares:
        out = add(out, s)
    return out
