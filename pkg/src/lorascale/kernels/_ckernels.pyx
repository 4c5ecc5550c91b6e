# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython collision-marking kernels (compiled backend).

Same contracts as ``_pykernels``: single-channel events sorted by start
time; ``lost`` is written in place as 0/1 flags.
"""


def mark_any_overlap(const double[::1] starts, const double[::1] ends,
                     unsigned char[::1] lost):
    """Flag every event whose [start, end) intersects another's."""
    cdef Py_ssize_t n = starts.shape[0]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            j = i + 1
            while j < n and starts[j] < ends[i]:
                lost[i] = 1
                lost[j] = 1
                j += 1


def mark_window(const double[::1] starts, const double[::1] ends, double factor,
                unsigned char[::1] lost):
    """Flag events with a foreign start inside (end - factor*duration, end).

    Interferers are local in a start-sorted timeline, so a short scan in
    each direction beats a binary search over the whole array.
    """
    cdef Py_ssize_t n = starts.shape[0]
    cdef Py_ssize_t i, j
    cdef double w_lo, end_i
    with nogil:
        for i in range(n):
            end_i = ends[i]
            w_lo = end_i - factor * (end_i - starts[i])
            if i > 0 and starts[i - 1] > w_lo:
                # nearest earlier start is above the window floor, and
                # starts[i-1] <= starts[i] < end_i puts it inside
                lost[i] = 1
                continue
            j = i + 1
            while j < n and starts[j] < end_i:
                if starts[j] > w_lo:
                    lost[i] = 1
                    break
                j += 1
