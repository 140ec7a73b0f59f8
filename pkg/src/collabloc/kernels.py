"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Setting ``COLLABLOC_PURE_PYTHON=1`` forces the fallback.
"""

import os

from collabloc import _kernels_py

BACKEND = "python"

if os.environ.get("COLLABLOC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from collabloc import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

batch_cosine = _impl.batch_cosine
match_counts = _impl.match_counts

__all__ = ["BACKEND", "batch_cosine", "match_counts"]
