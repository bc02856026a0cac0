"""Backend selection for the hot kernels.

Numba-compiled kernels are used when numba imports and ``HFACT_NUMBA`` is not
set to ``0``; otherwise the pure-numpy path runs.  Both paths must agree to
rounding, which the test-suite checks.
"""
from __future__ import annotations

import os

try:
    import numba
    from numba import njit, prange

    NUMBA_AVAILABLE = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; workqueue is always present
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn

    prange = range


def _env_enabled() -> bool:
    return os.environ.get("HFACT_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


_backend = "numba" if (NUMBA_AVAILABLE and _env_enabled()) else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    _backend = name


def set_threads(k: int | None) -> int:
    """Set the kernel thread count; ``None`` reads ``HFACT_THREADS``."""
    if k is None:
        env = os.environ.get("HFACT_THREADS")
        k = int(env) if env else 0
    if NUMBA_AVAILABLE and k and k > 0:
        k = min(int(k), numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(k)
        return k
    return numba.get_num_threads() if NUMBA_AVAILABLE else 1
