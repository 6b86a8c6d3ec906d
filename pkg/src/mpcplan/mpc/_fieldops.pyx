# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled field kernels over p = 2**61 - 1."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()

cdef extern from *:
    """
    typedef unsigned __int128 u128_t;
    static inline uint64_t mp61_reduce(u128_t z) {
        const uint64_t P = (((uint64_t)1) << 61) - 1;
        uint64_t r = (uint64_t)(z & P) + (uint64_t)(z >> 61);
        r = (r & P) + (r >> 61);
        if (r >= P) r -= P;
        return r;
    }
    static inline uint64_t mp61_mul(uint64_t a, uint64_t b) {
        return mp61_reduce((u128_t)a * b);
    }
    static inline uint64_t mp61_add(uint64_t a, uint64_t b) {
        const uint64_t P = (((uint64_t)1) << 61) - 1;
        uint64_t r = a + b;
        return r >= P ? r - P : r;
    }
    """
    uint64_t mp61_mul(uint64_t a, uint64_t b) nogil
    uint64_t mp61_add(uint64_t a, uint64_t b) nogil

P = (1 << 61) - 1


def mul_mod(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))
    shape = a.shape
    cdef cnp.ndarray[uint64_t, ndim=1] x = np.ascontiguousarray(a).reshape(-1)
    cdef cnp.ndarray[uint64_t, ndim=1] y = np.ascontiguousarray(b).reshape(-1)
    cdef cnp.ndarray[uint64_t, ndim=1] out = np.empty(x.shape[0], dtype=np.uint64)
    cdef Py_ssize_t i, n = x.shape[0]
    with nogil:
        for i in range(n):
            out[i] = mp61_mul(x[i], y[i])
    return out.reshape(shape)


def sum_mod(a):
    a = np.asarray(a, dtype=np.uint64)
    if a.ndim == 1:
        return sum_mod(a[:, None])[0]
    cdef cnp.ndarray[uint64_t, ndim=2] x = np.ascontiguousarray(a)
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    cdef cnp.ndarray[uint64_t, ndim=1] out = np.zeros(k, dtype=np.uint64)
    with nogil:
        for i in range(n):
            for j in range(k):
                out[j] = mp61_add(out[j], x[i, j])
    return out


def accumulate(flags, values):
    cdef cnp.ndarray[uint64_t, ndim=1] e = np.ascontiguousarray(flags, dtype=np.uint64)
    cdef cnp.ndarray[uint64_t, ndim=2] out = np.array(values, dtype=np.uint64, copy=True, order="C")
    cdef Py_ssize_t n = out.shape[0], k = out.shape[1], i, j
    with nogil:
        for i in range(1, n):
            for j in range(k):
                out[i, j] = mp61_add(out[i, j], mp61_mul(e[i], out[i - 1, j]))
    return out
