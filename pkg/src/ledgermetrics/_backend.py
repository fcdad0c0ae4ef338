"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``LEDGERMETRICS_PURE=1`` to force the fallback.
"""

import os

from . import _pure

if os.environ.get("LEDGERMETRICS_PURE"):
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _pure
        BACKEND = "python"
    else:
        BACKEND = "cython"

uf_roots = _impl.uf_roots
window_counts = _impl.window_counts
gini_sorted = _impl.gini_sorted
prefix_count = _impl.prefix_count
jacobi_eigen = _impl.jacobi_eigen

__all__ = ["BACKEND", "uf_roots", "window_counts", "gini_sorted", "prefix_count", "jacobi_eigen"]
