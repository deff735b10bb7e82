# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled detection kernel. Semantics must match ``_detect_py`` exactly."""

import numpy as np


def detect_segments(returns, double eps):
    r = np.ascontiguousarray(returns, dtype=np.float64)
    cdef double[::1] rv = r
    cdef Py_ssize_t n = rv.shape[0]
    cdef Py_ssize_t i0 = 0, k0, k, k_ext
    cdef int kind
    cdef double cum, ext, delta
    cdef bint terminated

    while i0 < n and rv[i0] == 0.0:
        i0 += 1
    if i0 == n:
        return []

    kind = 1 if rv[i0] > 0.0 else -1
    k0 = i0
    events = []
    while True:
        cum = 0.0
        ext = 0.0
        k_ext = k0
        terminated = False
        for k in range(k0 + 1, n + 1):
            cum += rv[k - 1]
            if kind == -1:
                if cum <= ext:
                    ext = cum
                    k_ext = k
                delta = cum - ext
            else:
                if cum >= ext:
                    ext = cum
                    k_ext = k
                delta = ext - cum
            if delta > eps:
                events.append((kind, k0, k_ext))
                kind = -kind
                k0 = k_ext
                terminated = True
                break
        if not terminated:
            break
    return events
