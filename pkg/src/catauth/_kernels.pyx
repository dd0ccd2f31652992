# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``_kernels_py`` operation for operation."""

from libc.math cimport sqrt, INFINITY


def majorizes(const double[::1] y, const double[::1] x, double tol):
    cdef Py_ssize_t n = y.shape[0], k
    cdef double sy = 0.0, sx = 0.0
    if x.shape[0] != n:
        raise ValueError("vectors must have equal length")
    for k in range(n):
        sy += y[k]
        sx += x[k]
        if sy < sx - tol:
            return False
    return abs(sy - sx) <= tol


def min_tail_ratio(const double[::1] b, const double[::1] c, double tol):
    cdef Py_ssize_t n = b.shape[0], l
    cdef double eb = 0.0, ec = 0.0, best = 1.0, r
    if c.shape[0] != n:
        raise ValueError("vectors must have equal length")
    for l in range(n - 1, -1, -1):
        eb += b[l]
        ec += c[l]
        if ec <= tol:
            continue
        r = eb / ec
        if r < best:
            best = r
    if best < 0.0:
        best = 0.0
    return best


def best_breakpoints(const double[::1] b, const double[::1] c, double tol):
    """Return ``(score, mask)`` for the best feasible block split.

    Bit ``k`` of ``mask`` closes a block after position ``k``. ``score`` is
    the sum over blocks of sqrt(B_J * C_J); ``mask == -1`` if no split is
    feasible.
    """
    cdef Py_ssize_t n = b.shape[0], i, start, end
    cdef long long mask, nmasks, best_mask = -1
    cdef double best = -1.0, score, bsum, csum, chi, prev, cum_chi, cum_b
    cdef bint ok
    if c.shape[0] != n:
        raise ValueError("vectors must have equal length")
    if n > 62:
        raise ValueError("dimension too large for breakpoint enumeration")
    nmasks = (<long long>1) << (n - 1)
    for mask in range(nmasks):
        ok = True
        start = 0
        score = 0.0
        prev = INFINITY
        cum_chi = 0.0
        cum_b = 0.0
        for end in range(n):
            if end != n - 1 and not ((mask >> end) & 1):
                continue
            bsum = 0.0
            csum = 0.0
            for i in range(start, end + 1):
                bsum += b[i]
                csum += c[i]
            for i in range(start, end + 1):
                if csum > 0.0:
                    chi = c[i] * bsum / csum
                else:
                    chi = b[i]
                if chi > prev + tol:
                    ok = False
                    break
                prev = chi
                cum_chi += chi
                cum_b += b[i]
                if cum_chi < cum_b - tol:
                    ok = False
                    break
            if not ok:
                break
            score += sqrt(bsum * csum)
            start = end + 1
        if ok and score > best + 1e-15:
            best = score
            best_mask = mask
    return best, best_mask


def first_failure(const double[::1] probs, const double[::1] uniforms):
    """Position of the first test with ``uniform >= prob``, or -1."""
    cdef Py_ssize_t n = probs.shape[0], i
    if uniforms.shape[0] < n:
        raise ValueError("not enough uniforms")
    for i in range(n):
        if not (uniforms[i] < probs[i]):
            return i
    return -1
