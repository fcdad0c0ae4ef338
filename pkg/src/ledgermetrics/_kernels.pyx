# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics mirror ledgermetrics._pure exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x) noexcept nogil:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def uf_roots(Py_ssize_t n, const cnp.int64_t[::1] a, const cnp.int64_t[::1] b):
    """Union every (a[i], b[i]) pair over 0..n-1; label each node by its set's minimum index."""
    cdef Py_ssize_t[::1] parent = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] size = np.ones(n, dtype=np.intp)
    cdef Py_ssize_t i, ra, rb, m = a.shape[0]
    cdef cnp.int64_t[::1] low
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    with nogil:
        for i in range(m):
            ra = _find(parent, a[i])
            rb = _find(parent, b[i])
            if ra == rb:
                continue
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    low_arr = np.full(n, n, dtype=np.int64)
    low = low_arr
    with nogil:
        for i in range(n):
            ra = _find(parent, i)
            if i < low[ra]:
                low[ra] = i
        for i in range(n):
            res[i] = low[_find(parent, i)]
    return out


def window_counts(const cnp.int64_t[::1] codes, Py_ssize_t lo, Py_ssize_t hi, Py_ssize_t n_entities):
    """Occurrences of each entity code among codes[lo:hi]."""
    out = np.zeros(n_entities, dtype=np.int64)
    cdef cnp.int64_t[::1] c = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(lo, hi):
            c[codes[i]] += 1
    return out


def gini_sorted(const double[::1] asc):
    """Rank-weighted Gini over amounts sorted ascending."""
    cdef Py_ssize_t i, n = asc.shape[0]
    cdef double total = 0.0, weighted = 0.0
    for i in range(n):
        total += asc[i]
        weighted += (i + 1) * asc[i]
    return 2.0 * weighted / (n * total) - (n + 1.0) / n


def prefix_count(const double[::1] desc, double threshold):
    """Smallest k such that the k largest amounts sum strictly above threshold."""
    cdef Py_ssize_t i, n = desc.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += desc[i]
        if acc > threshold:
            return i + 1
    return n


def jacobi_eigen(double[:, ::1] a, double tol, int max_sweeps):
    """Cyclic Jacobi on a symmetric matrix, in place.

    Returns (diagonal, eigenvector matrix, sweeps used); sweeps is -1 when the
    off-diagonal maximum is still >= tol after max_sweeps.
    """
    cdef Py_ssize_t n = a.shape[0], p, q, k
    cdef int sweep
    cdef double off, apq, theta, t, c, s, akp, akq
    vm = np.eye(n)
    cdef double[:, ::1] v = vm
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                if fabs(a[p, q]) > off:
                    off = fabs(a[p, q])
        if off < tol:
            return np.asarray(a).diagonal().copy(), vm, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    akp = v[k, p]
                    akq = v[k, q]
                    v[k, p] = c * akp - s * akq
                    v[k, q] = s * akp + c * akq
    return np.asarray(a).diagonal().copy(), vm, -1
