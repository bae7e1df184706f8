"""Kernel backend selection.

The numeric hot loops in this package ship in two flavors: a numba
``@njit`` kernel and a pure-numpy fallback. The active flavor is chosen
once at import time from the ``GAPSEG_BACKEND`` environment variable:

    GAPSEG_BACKEND=auto    use numba when importable (default)
    GAPSEG_BACKEND=numba   require numba, fail otherwise
    GAPSEG_BACKEND=numpy   force the pure-numpy fallbacks

Both flavors of every kernel stay importable regardless of the flag, so
tests and benchmarks can exercise them side by side.
"""

from __future__ import annotations

import os

_VALID = ("auto", "numba", "numpy")

_requested = os.environ.get("GAPSEG_BACKEND", "auto").strip().lower()
if _requested not in _VALID:
    raise ValueError(
        f"GAPSEG_BACKEND must be one of {_VALID}, got {_requested!r}"
    )

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

if _requested == "numba" and not HAS_NUMBA:
    raise ImportError("GAPSEG_BACKEND=numba but numba is not importable")

USE_NUMBA: bool = HAS_NUMBA if _requested == "auto" else _requested == "numba"


def active_backend() -> str:
    """Name of the kernel flavor in use: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
