# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row kernels. Same signatures and semantics as ``_pykernels``.

Each row is processed independently with the GIL released, so callers can
fan trials out over threads.
"""
import numpy as np

from libc.math cimport exp, log
from libc.stdlib cimport malloc, free

cdef enum:
    THR = 0
    APS = 1
    RAPS = 2
    SAPS = 3
    RANK = 4


cdef inline double _row_entropy(const double[:, ::1] z, Py_ssize_t r, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t j
    cdef double m = z[r, 0], s = 0.0, dot = 0.0, e, h
    for j in range(1, k):
        if z[r, j] > m:
            m = z[r, j]
    for j in range(k):
        e = exp(z[r, j] - m)
        s += e
        dot += e * (z[r, j] - m)
    h = log(s) - dot / s
    return h if h > 0.0 else 0.0


cdef inline void _row_softmax(const double[:, ::1] z, Py_ssize_t r, Py_ssize_t k,
                              double scale, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t j
    cdef double m = z[r, 0] * scale, s = 0.0, v
    for j in range(1, k):
        v = z[r, j] * scale
        if v > m:
            m = v
    for j in range(k):
        v = exp(z[r, j] * scale - m)
        out[r, j] = v
        s += v
    for j in range(k):
        out[r, j] = out[r, j] / s


def softmax_rows(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], r
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(n):
            _row_softmax(z, r, k, 1.0, o)
    return out


def entropy_rows(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], r
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            o[r] = _row_entropy(z, r, k)
    return out


def er_prob_rows(const double[:, ::1] z, double temperature, double floor):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], r
    cdef double h
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(n):
            h = _row_entropy(z, r, k)
            if h < floor:
                h = floor
            _row_softmax(z, r, k, 1.0 / (h * temperature), o)
    return out


cdef void _stable_desc_sort(const double* p, Py_ssize_t* idx, Py_ssize_t* tmp, Py_ssize_t k) noexcept nogil:
    # bottom-up merge sort on indices: larger p first, equal p keeps ascending index
    cdef Py_ssize_t width = 1, lo, mid, hi, a, b, t
    cdef Py_ssize_t* src = idx
    cdef Py_ssize_t* dst = tmp
    cdef Py_ssize_t* swap
    while width < k:
        lo = 0
        while lo < k:
            mid = lo + width
            if mid > k:
                mid = k
            hi = lo + 2 * width
            if hi > k:
                hi = k
            a = lo
            b = mid
            t = lo
            while a < mid and b < hi:
                if p[src[b]] > p[src[a]]:
                    dst[t] = src[b]
                    b += 1
                else:
                    dst[t] = src[a]
                    a += 1
                t += 1
            while a < mid:
                dst[t] = src[a]
                a += 1
                t += 1
            while b < hi:
                dst[t] = src[b]
                b += 1
                t += 1
            lo = hi
        swap = src
        src = dst
        dst = swap
        width *= 2
    if src != idx:
        for t in range(k):
            idx[t] = src[t]


cdef inline double _sorted_score(int kind, Py_ssize_t j, Py_ssize_t k, double head, double pj,
                                 double p1, double u, double lam, Py_ssize_t k_reg) noexcept nogil:
    # j is the 0-based rank position, head the sum of the j larger probabilities
    cdef Py_ssize_t pen
    if kind == APS:
        return head + u * pj
    if kind == RAPS:
        pen = j - k_reg
        if pen < 0:
            pen = 0
        return (head + u * pj) + lam * pen
    if kind == SAPS:
        if j == 0:
            return u * pj
        return p1 + (j - 1 + u) * lam
    return (j + 1) / <double>k


def score_matrix(const double[:, ::1] p, const double[::1] u, int kind, double lam, Py_ssize_t k_reg):
    cdef Py_ssize_t n = p.shape[0], k = p.shape[1], r, j, c
    cdef double head, p1
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    if kind == THR:
        with nogil:
            for r in range(n):
                for j in range(k):
                    o[r, j] = 1.0 - p[r, j]
        return out
    if kind not in (APS, RAPS, SAPS, RANK):
        raise ValueError(f"unknown score kind {kind}")
    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    if idx == NULL or tmp == NULL:
        free(idx)
        free(tmp)
        raise MemoryError()
    try:
        with nogil:
            for r in range(n):
                for j in range(k):
                    idx[j] = j
                _stable_desc_sort(&p[r, 0], idx, tmp, k)
                head = 0.0
                p1 = p[r, idx[0]]
                for j in range(k):
                    c = idx[j]
                    o[r, c] = _sorted_score(kind, j, k, head, p[r, c], p1, u[r], lam, k_reg)
                    head = head + p[r, c]
    finally:
        free(idx)
        free(tmp)
    return out


def label_scores(const double[:, ::1] p, const long[::1] labels, const double[::1] u,
                 int kind, double lam, Py_ssize_t k_reg):
    cdef Py_ssize_t n = p.shape[0], k = p.shape[1], r, j, y, rank
    cdef double head, py
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    if kind not in (THR, APS, RAPS, SAPS, RANK):
        raise ValueError(f"unknown score kind {kind}")
    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    if idx == NULL or tmp == NULL:
        free(idx)
        free(tmp)
        raise MemoryError()
    try:
        with nogil:
            for r in range(n):
                y = labels[r]
                py = p[r, y]
                if kind == THR:
                    o[r] = 1.0 - py
                    continue
                for j in range(k):
                    idx[j] = j
                _stable_desc_sort(&p[r, 0], idx, tmp, k)
                head = 0.0
                rank = 0
                for j in range(k):
                    if idx[j] == y:
                        rank = j
                        break
                    head = head + p[r, idx[j]]
                o[r] = _sorted_score(kind, rank, k, head, py, p[r, idx[0]], u[r], lam, k_reg)
    finally:
        free(idx)
        free(tmp)
    return out
