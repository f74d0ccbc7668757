"""Hot loops, compiled when the Cython extension is available.

The compiled module is used unless it failed to build or
``CLAV_PURE_PYTHON=1`` is set, in which case the pure-Python
implementation with identical results is used instead.
"""

import os

from . import _pure

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pure}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("CLAV_PURE_PYTHON"):
    backend = "cython"
    _impl = _ckernels
else:
    backend = "python"
    _impl = _pure

small_region_count = _impl.small_region_count
sample_hits = _impl.sample_hits
saturating_accumulate = _impl.saturating_accumulate
minimal_intervals = _impl.minimal_intervals
staircase = _impl.staircase
dominance_query = _impl.dominance_query

__all__ = [
    "BACKENDS", "backend", "small_region_count", "sample_hits", "saturating_accumulate",
    "minimal_intervals", "staircase", "dominance_query",
]
