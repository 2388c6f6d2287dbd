"""Pick the compiled or pure-Python kernels at import time.

The compiled extension is preferred. Setting ``COVERPLAN_PURE_PYTHON=1``
forces the fallback, as does a missing or broken build.
"""
from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

BACKEND = "python"
cast_rays = _pykernels.cast_rays
cover_search = _pykernels.cover_search

if os.environ.get("COVERPLAN_PURE_PYTHON") != "1":
    try:
        from . import _ckernels
    except ImportError as exc:  # pragma: no cover - depends on the build
        log.debug("compiled kernels unavailable (%s); using the Python fallback", exc)
    else:
        BACKEND = "cython"
        cast_rays = _ckernels.cast_rays
        cover_search = _ckernels.cover_search


def kernels(name: str | None = None, kernel: str = "cast_rays"):
    """Return kernel ``kernel`` from backend ``name`` (the active one if None)."""
    if kernel not in ("cast_rays", "cover_search"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if name is None:
        return globals()[kernel]
    if name == "python":
        return getattr(_pykernels, kernel)
    if name == "cython":
        from . import _ckernels

        return getattr(_ckernels, kernel)
    raise ValueError(f"unknown backend {name!r}")
