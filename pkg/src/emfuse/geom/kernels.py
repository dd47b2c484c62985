"""Kernel backend selection: compiled extension with pure-numpy fallback.

The compiled module is preferred when importable; set EMFUSE_KERNEL=numpy
to force the fallback (used by the benchmark and for debugging).
"""

from __future__ import annotations

import os

from . import _closest_np

if os.environ.get("EMFUSE_KERNEL", "").lower() == "numpy":
    _impl = _closest_np
    BACKEND = "numpy"
else:
    try:
        from . import _closest_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _closest_np
        BACKEND = "numpy"

closest_point_triangles = _impl.closest_point_triangles
ray_parity = _impl.ray_parity
