"""Collision-marking kernels with a compiled core and a NumPy fallback.

The Cython extension is preferred when it was built; otherwise the
NumPy implementation takes over transparently.  Both produce identical
flags for identical inputs, so simulation results never depend on the
backend.  Selection can be forced with the ``LORASCALE_KERNELS``
environment variable (``c`` or ``python``) or at runtime with
:func:`use_backend`.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None


def available_backends() -> tuple[str, ...]:
    return ("c", "python") if _ckernels is not None else ("python",)


_active = os.environ.get("LORASCALE_KERNELS", "").strip().lower() or available_backends()[0]
if _active not in available_backends():
    raise ImportError(
        f"requested kernel backend {_active!r} is not available "
        f"(built backends: {', '.join(available_backends())})"
    )


def active_backend() -> str:
    return _active


def use_backend(name: str) -> None:
    """Switch kernel backend; raises if the extension was not built."""
    global _active
    if name not in available_backends():
        raise ValueError(
            f"unknown or unavailable backend {name!r}; built: {available_backends()}"
        )
    _active = name


def _as_input(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def mark_any_overlap(starts, ends) -> np.ndarray:
    """Lost flags for sorted same-channel events under the any-overlap rule."""
    starts = _as_input(starts)
    ends = _as_input(ends)
    if _active == "c":
        lost = np.zeros(starts.shape[0], dtype=np.uint8)
        _ckernels.mark_any_overlap(starts, ends, lost)
        return lost.view(bool)
    return _pykernels.mark_any_overlap(starts, ends)


def mark_window(starts, ends, factor: float) -> np.ndarray:
    """Lost flags for sorted same-channel events under a vulnerability window."""
    starts = _as_input(starts)
    ends = _as_input(ends)
    if _active == "c":
        lost = np.zeros(starts.shape[0], dtype=np.uint8)
        _ckernels.mark_window(starts, ends, float(factor), lost)
        return lost.view(bool)
    return _pykernels.mark_window(starts, ends, float(factor))
