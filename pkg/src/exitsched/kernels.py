"""Kernel selection.

The compiled module is used when it imports; otherwise, or when the
``EXITSCHED_PURE`` environment variable is set to a non-empty value other than
``0``, the pure-Python fallback is used. Both produce identical bits.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("EXITSCHED_PURE", "") in ("", "0"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

urgency_sum = _impl.urgency_sum
poisson_arrivals = _impl.poisson_arrivals

__all__ = ["BACKEND", "urgency_sum", "poisson_arrivals"]
