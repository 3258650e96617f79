# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. See ``fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport NAN

cnp.import_array()


def join_index(ids, cnp.ndarray table_ids, cnp.ndarray table_rows):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] flat = np.ascontiguousarray(ids, dtype=np.int64).reshape(-1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] keys = np.ascontiguousarray(table_ids, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows = np.ascontiguousarray(table_rows, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(flat.shape[0], dtype=np.int64)
    cdef Py_ssize_t i, lo, hi, mid, n = flat.shape[0], m = keys.shape[0]
    cdef cnp.int64_t x
    for i in range(n):
        x = flat[i]
        lo = 0
        hi = m
        while lo < hi:
            mid = (lo + hi) >> 1
            if keys[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        if lo < m and keys[lo] == x:
            out[i] = rows[lo]
        else:
            out[i] = -1
    return out.reshape(np.shape(ids))


cdef double _auc_sorted(double[:] s, cnp.int64_t[:] y, Py_ssize_t a, Py_ssize_t b):
    cdef Py_ssize_t i = a, j
    cdef double n_pos = 0, n_neg, rank_sum = 0, avg
    cdef Py_ssize_t pos_in_block
    for j in range(a, b):
        n_pos += y[j]
    n_neg = (b - a) - n_pos
    if n_pos == 0 or n_neg == 0:
        return NAN
    while i < b:
        j = i
        pos_in_block = 0
        while j < b and s[j] == s[i]:
            pos_in_block += y[j]
            j += 1
        avg = ((i - a) + 1 + (j - a)) / 2.0
        rank_sum += avg * pos_in_block
        i = j
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    order = np.argsort(s, kind="mergesort")
    s = np.ascontiguousarray(s[order])
    y = np.ascontiguousarray(y[order])
    return float(_auc_sorted(s, y, 0, s.shape[0]))


def grouped_auc(groups, scores, labels):
    g = np.asarray(groups, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    order = np.lexsort((s, g))
    cdef cnp.int64_t[:] gs = np.ascontiguousarray(g[order])
    cdef double[:] ss = np.ascontiguousarray(s[order])
    cdef cnp.int64_t[:] ys = np.ascontiguousarray(y[order])
    cdef Py_ssize_t n = gs.shape[0], a = 0, b, k = 0
    uniq = np.empty(n, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[:] uv = uniq
    cdef double[:] ov = out
    while a < n:
        b = a
        while b < n and gs[b] == gs[a]:
            b += 1
        uv[k] = gs[a]
        ov[k] = _auc_sorted(ss, ys, a, b)
        k += 1
        a = b
    return uniq[:k], out[:k]
