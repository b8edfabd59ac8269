"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it was built; otherwise the
numpy versions in ``_kernels_py`` are used. Setting the environment variable
``BIFDETECT_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("BIFDETECT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _kernels_py
    else:
        BACKEND = "cython"

rk4_pitchfork = _impl.rk4_pitchfork
rk4_linear = _impl.rk4_linear
barrier_terms = _impl.barrier_terms
rk4_loop = _kernels_py.rk4_loop

__all__ = ["BACKEND", "barrier_terms", "rk4_linear", "rk4_loop", "rk4_pitchfork"]
