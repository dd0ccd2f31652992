"""Pure-Python versions of the compiled kernels.

Same signatures and the same floating-point operation order as
``_kernels.pyx``, so both backends return bit-identical results.
"""

import math


def majorizes(y, x, tol):
    y = y.tolist()
    x = x.tolist()
    if len(x) != len(y):
        raise ValueError("vectors must have equal length")
    sy = 0.0
    sx = 0.0
    for yk, xk in zip(y, x):
        sy += yk
        sx += xk
        if sy < sx - tol:
            return False
    return abs(sy - sx) <= tol


def min_tail_ratio(b, c, tol):
    b = b.tolist()
    c = c.tolist()
    if len(b) != len(c):
        raise ValueError("vectors must have equal length")
    eb = 0.0
    ec = 0.0
    best = 1.0
    for bl, cl in zip(reversed(b), reversed(c)):
        eb += bl
        ec += cl
        if ec <= tol:
            continue
        r = eb / ec
        if r < best:
            best = r
    return max(best, 0.0)


def best_breakpoints(b, c, tol):
    b = b.tolist()
    c = c.tolist()
    n = len(b)
    if len(c) != n:
        raise ValueError("vectors must have equal length")
    if n > 62:
        raise ValueError("dimension too large for breakpoint enumeration")
    best = -1.0
    best_mask = -1
    for mask in range(1 << (n - 1)):
        ok = True
        start = 0
        score = 0.0
        prev = math.inf
        cum_chi = 0.0
        cum_b = 0.0
        for end in range(n):
            if end != n - 1 and not (mask >> end) & 1:
                continue
            bsum = 0.0
            csum = 0.0
            for i in range(start, end + 1):
                bsum += b[i]
                csum += c[i]
            for i in range(start, end + 1):
                chi = c[i] * bsum / csum if csum > 0.0 else b[i]
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
            score += math.sqrt(bsum * csum)
            start = end + 1
        if ok and score > best + 1e-15:
            best = score
            best_mask = mask
    return best, best_mask


def first_failure(probs, uniforms):
    if len(uniforms) < len(probs):
        raise ValueError("not enough uniforms")
    for i, (p, u) in enumerate(zip(probs.tolist(), uniforms.tolist())):
        if not u < p:
            return i
    return -1
