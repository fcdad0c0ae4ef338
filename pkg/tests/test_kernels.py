import os
import subprocess
import sys

import numpy as np

from ledgermetrics import _backend


def components(n, a, b):
    """Labels as the minimum node of each connected component (BFS)."""
    adj = [[] for _ in range(n)]
    for x, y in zip(a, b):
        adj[x].append(y)
        adj[y].append(x)
    label = [-1] * n
    for s in range(n):
        if label[s] >= 0:
            continue
        stack, comp = [s], []
        label[s] = s
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = s
                    stack.append(v)
    return label


def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")


def test_env_forces_fallback():
    code = "import ledgermetrics; print(ledgermetrics.BACKEND)"
    env = dict(os.environ, LEDGERMETRICS_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_uf_roots(backend, rng):
    for _ in range(50):
        n = int(rng.integers(1, 80))
        m = int(rng.integers(0, 2 * n))
        a = rng.integers(0, n, m).astype(np.int64)
        b = rng.integers(0, n, m).astype(np.int64)
        assert list(backend.uf_roots(n, a, b)) == components(n, a, b)


def test_window_counts(backend, rng):
    codes = rng.integers(0, 7, 500).astype(np.int64)
    got = backend.window_counts(codes, 40, 333, 7)
    assert list(got) == list(np.bincount(codes[40:333], minlength=7))
    assert list(backend.window_counts(codes, 5, 5, 7)) == [0] * 7


def test_gini_sorted(backend):
    assert abs(backend.gini_sorted(np.array([0.0, 1, 2, 3])) - 5 / 12) < 1e-15


def test_prefix_count(backend):
    desc = np.array([4.0, 3, 3])
    assert backend.prefix_count(desc, 5.0) == 2
    assert backend.prefix_count(desc, 7.0) == 3
    assert backend.prefix_count(np.array([1.0, 1.0]), 1.0) == 2


def test_jacobi(backend, rng):
    a = rng.normal(size=(8, 8))
    a = np.ascontiguousarray((a + a.T) / 2)
    w, v, sweeps = backend.jacobi_eigen(a.copy(), 1e-12 * np.abs(a).max(), 100)
    assert sweeps >= 0
    assert np.abs(v @ np.diag(w) @ v.T - a).max() < 1e-8
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(a), atol=1e-10)


def test_backends_agree(rng):
    from ledgermetrics import _pure
    try:
        from ledgermetrics import _kernels
    except ImportError:
        return
    x = np.sort(rng.random(300))
    assert abs(_pure.gini_sorted(x) - _kernels.gini_sorted(x)) < 1e-12
    d = x[::-1].copy()
    for th in (0.1, 50.0, 149.9):
        assert _pure.prefix_count(d, th) == _kernels.prefix_count(d, th)
