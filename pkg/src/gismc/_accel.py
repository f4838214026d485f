"""JIT switch for the hot kernels.

Kernels are written once in a numba-compatible subset of Python/numpy.  When
numba is importable and ``GISMC_DISABLE_NUMBA`` is unset (or ``0``), they are
compiled with ``numba.njit``; otherwise the decorator is the identity and the
same code runs under CPython on plain numpy arrays.
"""

import os

_FLAG = os.environ.get("GISMC_DISABLE_NUMBA", "0").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no", "off")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

USE_NUMBA = _numba is not None and not DISABLED_BY_ENV

NJIT_OPTS = {"cache": True, "fastmath": False, "error_model": "numpy"}


def njit(fn=None, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    opts = dict(NJIT_OPTS)
    opts.update(kwargs)

    def wrap(f):
        if USE_NUMBA:
            return _numba.njit(**opts)(f)
        return f

    if fn is not None:
        return wrap(fn)
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
