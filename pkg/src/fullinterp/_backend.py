"""Pick the forest kernel implementation at import time.

``FULLINTERP_BACKEND=python`` forces the numpy fallback; ``=cython`` makes a
missing extension an import error instead of a silent fallback.
"""
import os

_requested = os.environ.get("FULLINTERP_BACKEND", "").strip().lower()

if _requested == "python":
    from . import _pykernels as kernels

    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _pykernels as kernels

        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
