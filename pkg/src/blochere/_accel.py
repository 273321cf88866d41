"""Numba switch.

Hot loops are written once as plain Python/numpy functions. When numba is
importable and ``BLOCH_ERE_NUMBA`` is not set to ``0`` they are compiled with
``@njit``; otherwise callers use the vectorised numpy fallbacks in
:mod:`blochere.kernels`.
"""
import os

_FLAG = os.environ.get("BLOCH_ERE_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def njit(func):
    if not USE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def kernel_path():
    return "numba" if USE_NUMBA else "numpy"
