"""NumPy collision-marking kernels (fallback backend).

Both kernels take event start/end times of a single non-interacting
channel (one spreading factor), sorted ascending by start, and return a
boolean array flagging the events destroyed by a collision.  Semantics
match the Cython backend bit for bit.
"""

from __future__ import annotations

import numpy as np


def mark_any_overlap(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Flag every event whose [start, end) intersects another's.

    For sorted starts, event j > i overlaps i iff starts[j] < ends[i];
    the backward direction is the same relation seen from j, marked via
    a difference array over each event's forward overlap range.
    """
    n = starts.shape[0]
    if n < 2:
        return np.zeros(n, dtype=bool)
    idx = np.arange(n)
    hi = np.searchsorted(starts, ends, side="left")
    lost = hi > idx + 1  # overlaps someone starting later
    # someone starting earlier overlaps me: i sits in a range (j, hi_j)
    bump = np.zeros(n + 1, dtype=np.int64)
    src = idx[lost]
    np.add.at(bump, src + 1, 1)
    np.add.at(bump, hi[src], -1)
    covered = np.cumsum(bump[:n]) > 0
    return lost | covered


def mark_window(starts: np.ndarray, ends: np.ndarray, factor: float) -> np.ndarray:
    """Flag events with a foreign start inside their vulnerability window.

    Event i is lost iff another event starts strictly inside
    (ends[i] - factor * duration_i, ends[i]).
    """
    n = starts.shape[0]
    if n < 2:
        return np.zeros(n, dtype=bool)
    w_lo = ends - factor * (ends - starts)
    lo = np.searchsorted(starts, w_lo, side="right")
    hi = np.searchsorted(starts, ends, side="left")
    own = starts > w_lo  # my own start sits in my window when factor > 1
    return (hi - lo - own.astype(np.int64)) > 0
