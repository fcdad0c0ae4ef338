"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Each function has the same signature and results as its compiled twin.
"""

import math

import numpy as np


def uf_roots(n, a, b):
    parent = list(range(n))
    size = [1] * n

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for x, y in zip(a.tolist(), b.tolist()):
        rx, ry = find(x), find(y)
        if rx == ry:
            continue
        if size[rx] < size[ry]:
            rx, ry = ry, rx
        parent[ry] = rx
        size[rx] += size[ry]

    low = [n] * n
    for i in range(n):
        r = find(i)
        if i < low[r]:
            low[r] = i
    return np.array([low[find(i)] for i in range(n)], dtype=np.int64)


def window_counts(codes, lo, hi, n_entities):
    return np.bincount(codes[lo:hi], minlength=n_entities).astype(np.int64)


def gini_sorted(asc):
    n = asc.shape[0]
    total = 0.0
    weighted = 0.0
    for i, x in enumerate(asc.tolist(), start=1):
        total += x
        weighted += i * x
    return 2.0 * weighted / (n * total) - (n + 1.0) / n


def prefix_count(desc, threshold):
    acc = 0.0
    for i, x in enumerate(desc.tolist(), start=1):
        acc += x
        if acc > threshold:
            return i
    return desc.shape[0]


def jacobi_eigen(a, tol, max_sweeps):
    n = a.shape[0]
    v = np.eye(n)
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        off = np.abs(a[iu]).max() if n > 1 else 0.0
        if off < tol:
            return a.diagonal().copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return a.diagonal().copy(), v, -1
