"""Pure numpy/Python versions of the field kernels."""
import numpy as np

P = (1 << 61) - 1
_P = np.uint64(P)
_M32 = np.uint64(0xFFFFFFFF)
_M29 = np.uint64((1 << 29) - 1)


def _reduce(x):
    # x < 2**64; one folding step plus two conditional subtracts
    r = (x & _P) + (x >> np.uint64(61))
    r = np.where(r >= _P, r - _P, r)
    return np.where(r >= _P, r - _P, r)


def mul_mod(a, b):
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a0, a1 = a & _M32, a >> np.uint64(32)
    b0, b1 = b & _M32, b >> np.uint64(32)
    hi = (a1 * b1) << np.uint64(3)  # 2**64 == 8 (mod p)
    mid = a1 * b0 + a0 * b1
    mid = (mid >> np.uint64(29)) + ((mid & _M29) << np.uint64(32))
    lo = _reduce(a0 * b0)
    return _reduce(hi + mid + lo)


def sum_mod(a):
    """Sum over axis 0 without uint64 overflow."""
    a = np.asarray(a, dtype=np.uint64)
    lo = (a & _M32).sum(axis=0, dtype=np.uint64)
    hi = (a >> np.uint64(32)).sum(axis=0, dtype=np.uint64)
    return _reduce(mul_mod(_reduce(hi), np.uint64(1 << 32)) + _reduce(lo))


def accumulate(flags, values):
    """Segmented scan: out[i] = values[i] + flags[i] * out[i-1] (mod p)."""
    flags = np.asarray(flags, dtype=np.uint64)
    values = np.asarray(values, dtype=np.uint64)
    out = values.copy()
    n = values.shape[0]
    if n == 0:
        return out
    rows = values.tolist()
    fl = flags.tolist()
    prev = rows[0]
    acc = [prev]
    for i in range(1, n):
        e = fl[i]
        prev = [(v + e * q) % P for v, q in zip(rows[i], prev)]
        acc.append(prev)
    out[:] = np.array(acc, dtype=np.uint64).reshape(values.shape)
    return out
