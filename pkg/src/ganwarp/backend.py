"""Kernel backend selection.

Hot gather/scatter kernels exist twice: numba @njit loops and a pure-numpy
fallback. ``GANWARP_BACKEND=numpy`` forces the fallback; ``numba`` forces the
jitted path (ImportError if numba is missing). Default is numba when
importable. The choice is made once at import.
"""

import os

_VALID = ("numba", "numpy")


def _pick() -> str:
    choice = os.environ.get("GANWARP_BACKEND", "").strip().lower()
    if choice and choice not in _VALID:
        raise ValueError(f"GANWARP_BACKEND must be one of {_VALID}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"


BACKEND = _pick()

if BACKEND == "numba":
    from . import _kernels_numba as kernels
else:
    from . import _kernels_numpy as kernels

__all__ = ["BACKEND", "kernels"]
