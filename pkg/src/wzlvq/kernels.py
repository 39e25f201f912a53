"""Backend selection for the nearest-point kernels.

The compiled extension is used when importable; set ``WZLVQ_PURE=1`` to force
the numpy fallback.  ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

if os.environ.get("WZLVQ_PURE") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

nearest_box = _impl.nearest_box
nearest_codebook = _impl.nearest_codebook

__all__ = ["BACKEND", "nearest_box", "nearest_codebook"]
