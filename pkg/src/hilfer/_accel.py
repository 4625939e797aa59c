"""Switch between numba-compiled kernels and the pure-numpy fallback.

Set ``HILFER_DISABLE_NUMBA=1`` before import to force the numpy path.
``HILFER_THREADS`` sets the default numba thread count.
"""

import os

_FALSE = {"", "0", "false", "no", "off"}


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in _FALSE


try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # Skip the TBB probe; it warns on older TBB installs.
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _flag("HILFER_DISABLE_NUMBA")


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def set_threads(n: int | None) -> int:
    """Set the numba worker count; returns the count in effect (1 without numba)."""
    if not HAVE_NUMBA:
        return 1
    if n is None:
        env = os.environ.get("HILFER_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
