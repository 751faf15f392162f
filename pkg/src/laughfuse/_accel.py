"""Numba switch shared by the hot kernels.

Set ``LAUGHFUSE_DISABLE_NUMBA=1`` to force the pure-numpy paths, e.g. when
debugging or on platforms without an LLVM toolchain.
"""

import os

_DISABLED = os.environ.get("LAUGHFUSE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def default_backend():
    return "numba" if HAVE_NUMBA else "numpy"


def resolve_backend(backend=None):
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable or disabled")
    return backend
