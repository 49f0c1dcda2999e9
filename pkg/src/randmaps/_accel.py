"""Numba switch for the hot kernels.

Every kernel in :mod:`randmaps.kernels` has a compiled loop version and a
vectorised numpy version. The compiled path is used when numba imports and
``RANDMAPS_NO_JIT`` is unset (or ``0``); the choice is made per call so both
paths can be exercised from one process.
"""

import os

# the system TBB is too old for numba; workqueue is always available
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NO_JIT_ENV = "RANDMAPS_NO_JIT"

HAVE_NUMBA = numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def jit_enabled():
    if not HAVE_NUMBA:
        return False
    return os.environ.get(NO_JIT_ENV, "0").strip().lower() in ("", "0", "false", "no")


def resolve_backend(backend=None):
    """Return ``"numba"`` or ``"numpy"``.

    ``backend=None`` follows the environment flag.
    """
    if backend is None:
        return "numba" if jit_enabled() else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def set_threads(k):
    if HAVE_NUMBA and k:
        numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))
