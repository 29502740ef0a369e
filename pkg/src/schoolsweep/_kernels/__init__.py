"""Convolution/pooling kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
semantically identical.  Set SCHOOLSWEEP_KERNELS=numpy|compiled to force a
backend (raises if a forced compiled backend is unavailable).
"""

from __future__ import annotations

import os

from . import _numpy

_BACKENDS = {"numpy": _numpy}
try:
    from . import _convext

    _BACKENDS["compiled"] = _convext
except ImportError:
    _convext = None

_forced = os.environ.get("SCHOOLSWEEP_KERNELS")
if _forced:
    if _forced not in _BACKENDS:
        raise ImportError(f"SCHOOLSWEEP_KERNELS={_forced!r} unavailable; have {sorted(_BACKENDS)}")
    BACKEND = _forced
else:
    BACKEND = "compiled" if "compiled" in _BACKENDS else "numpy"

_active = _BACKENDS[BACKEND]

conv3x3_forward = _active.conv3x3_forward
conv3x3_backward = _active.conv3x3_backward
maxpool2_forward = _active.maxpool2_forward
maxpool2_backward = _active.maxpool2_backward


def available_backends() -> dict[str, object]:
    """Name -> module for every importable backend."""
    return dict(_BACKENDS)
