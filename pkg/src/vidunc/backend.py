"""Kernel backend selection.

The warp kernels exist in two functionally identical lanes: a numba
``@njit`` lane (default) and a pure-numpy lane. Both produce bit-identical
results; the numba lane is faster on large frames, the numpy lane has no
JIT warm-up and no compiler dependency.

Selection happens once at import time through the ``VIDUNC_BACKEND``
environment variable:

    VIDUNC_BACKEND=numba   force the numba lane (error if numba missing)
    VIDUNC_BACKEND=numpy   force the pure-numpy lane
    (unset)                numba if importable, else numpy

``benchmarks/backend_bench.py`` times the two lanes against each other.
"""

from __future__ import annotations

import os
import warnings

_ENV_VAR = "VIDUNC_BACKEND"


def _resolve() -> str:
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        warnings.warn("numba not importable; falling back to numpy kernels")
        return "numpy"
    return "numba"


ACTIVE_BACKEND = _resolve()

if ACTIVE_BACKEND == "numba":
    from . import _kernels_numba as kernels
else:
    from . import _kernels_numpy as kernels


def active_backend() -> str:
    """Name of the kernel lane selected at import time."""
    return ACTIVE_BACKEND
