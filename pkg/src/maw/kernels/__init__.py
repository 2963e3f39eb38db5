"""Distance and clustering kernels.

The compiled extension is used when it imported cleanly; otherwise the
pure-Python implementations take over.  Set the environment variable
``MAW_PURE_PYTHON=1`` before import to force the pure backend (used by
the parity tests and the benchmark).
"""

import os

from . import _pure

EARTH_RADIUS_KM = _pure.EARTH_RADIUS_KM

if os.environ.get("MAW_PURE_PYTHON"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

haversine_km = _impl.haversine_km
trace_segment_labels = _impl.trace_segment_labels
incremental_pass = _impl.incremental_pass
lloyd_refine = _impl.lloyd_refine
