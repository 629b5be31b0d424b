"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``PILOTWAVE_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

COMPLETED = _fallback.COMPLETED
NODE_ABORT = _fallback.NODE_ABORT
STEP_UNDERFLOW = _fallback.STEP_UNDERFLOW
STEP_LIMIT = _fallback.STEP_LIMIT

BACKENDS = {"python": _fallback}

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None
else:
    BACKENDS["compiled"] = _kernels


def _select():
    wanted = os.environ.get("PILOTWAVE_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in BACKENDS:
            raise ImportError(f"PILOTWAVE_BACKEND={wanted!r} is not available; have {sorted(BACKENDS)}")
        return wanted
    return "compiled" if "compiled" in BACKENDS else "python"


NAME = _select()
kernels = BACKENDS[NAME]


def get(name: str | None = None):
    """Kernel module by name (default: the one selected at import)."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}") from None
