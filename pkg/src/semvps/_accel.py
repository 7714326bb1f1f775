"""Numba switch shared by every hot kernel.

Set ``SEMVPS_DISABLE_NUMBA=1`` to force the pure-numpy paths. The flag is
read at import time into :data:`USE_NUMBA`; tests flip the attribute
directly to exercise both routes in one process.
"""

import os
from typing import Any, Callable

_disabled = os.environ.get("SEMVPS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit(cache=True, nogil=True)`` or a no-op when numba is absent."""
    if not HAVE_NUMBA:  # pragma: no cover
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


def use_numba() -> bool:
    return USE_NUMBA
