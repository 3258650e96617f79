"""Kernel dispatch: the compiled extension if it imports, else numpy.

Set ``LEMUR_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from ._ext import fallback

BACKEND = "python"
if os.environ.get("LEMUR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ext import kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        BACKEND = "cython"
else:
    _compiled = None

_impl = _compiled if _compiled is not None else fallback

join_index = _impl.join_index
auc = _impl.auc
grouped_auc = _impl.grouped_auc

__all__ = ["BACKEND", "auc", "fallback", "grouped_auc", "join_index"]
