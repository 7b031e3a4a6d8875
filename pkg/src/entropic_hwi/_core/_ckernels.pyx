# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback.py`` (same semantics)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, lgamma, INFINITY, isfinite

cnp.import_array()


cdef inline double _lse2(double a, double b) nogil:
    cdef double m
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    m = a if a > b else b
    return m + log1p(exp(-(a - b if a > b else b - a)))


cdef inline double _lse3(double a, double b, double c) nogil:
    # the largest term contributes exp(0) = 1, so only two exponentials are needed
    cdef double t
    if b > a:
        t = a; a = b; b = t
    if c > a:
        t = a; a = c; c = t
    if a == -INFINITY:
        return -INFINITY
    return a + log1p(exp(b - a) + exp(c - a))


cdef inline double _log_pmf(long k, double lam) nogil:
    if lam == 0.0:
        return 0.0 if k == 0 else -INFINITY
    return -lam + k * log(lam) - lgamma(k + 1.0)


cdef inline double _log_tail(long k, double lam) nogil:
    if k <= lam + 1.0:
        return 0.0
    return _log_pmf(k, lam) - log1p(-lam / (k + 1.0))


def lse_matvec(const double[:, ::1] log_k, const double[::1] w):
    cdef Py_ssize_t n = log_k.shape[0], m = log_k.shape[1], i, j
    cdef double mx, s, z
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            mx = -INFINITY
            for j in range(m):
                z = log_k[i, j] + w[j]
                if z > mx:
                    mx = z
            if not isfinite(mx):
                out[i] = mx
                continue
            s = 0.0
            for j in range(m):
                s += exp(log_k[i, j] + w[j] - mx)
            out[i] = mx + log(s)
    return out_arr


def log_uniformized_apply(const double[::1] log_lo, const double[::1] log_mid,
                          const double[::1] log_hi, w_in, double lam_t,
                          bint periodic, double rel_tol=36.0,
                          double rel_floor=800.0, long max_steps=200000):
    cdef double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], i
    cdef double wmax = -INFINITY, lp, tail, amax, thr, a, prev, nxt
    cdef bint covered
    cdef long k = 0
    for i in range(n):
        if w[i] > wmax:
            wmax = w[i]
    if not isfinite(wmax):
        raise ValueError("input field has no finite entry")
    v_arr = np.array(w, dtype=np.float64)
    nv_arr = np.empty(n, dtype=np.float64)
    acc_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] nv = nv_arr
    cdef double[::1] acc = acc_arr
    cdef double[::1] tmp
    lp = _log_pmf(0, lam_t)
    for i in range(n):
        acc[i] = v[i] + lp
    while True:
        if k >= max_steps:
            raise RuntimeError(f"uniformization did not terminate in {max_steps} steps")
        k += 1
        lp = _log_pmf(k, lam_t)
        with nogil:
            for i in range(n):
                if i > 0:
                    prev = v[i - 1]
                elif periodic:
                    prev = v[n - 1]
                else:
                    prev = -INFINITY
                if i < n - 1:
                    nxt = v[i + 1]
                elif periodic:
                    nxt = v[0]
                else:
                    nxt = -INFINITY
                nv[i] = _lse3(log_lo[i] + prev, log_mid[i] + v[i], log_hi[i] + nxt)
                acc[i] = _lse2(acc[i], nv[i] + lp)
        tmp = v
        v = nv
        nv = tmp
        tail = _log_tail(k + 1, lam_t) + wmax
        if tail > 0.0:
            continue
        covered = True
        amax = -INFINITY
        for i in range(n):
            if not isfinite(acc[i]):
                covered = False
                break
            if acc[i] > amax:
                amax = acc[i]
        if not covered:
            continue
        thr = INFINITY
        for i in range(n):
            a = acc[i]
            if a < amax - rel_floor:
                a = amax - rel_floor
            if a < thr:
                thr = a
        if tail < thr - rel_tol:
            break
    return acc_arr, k


def w2_sweep(const double[::1] x, const double[::1] a, const double[::1] b):
    """Two-pointer sweep over the quantile functions of two grid measures."""
    cdef Py_ssize_t n = x.shape[0], i = 0, j = 0
    cdef double ra = a[0], rb = b[0], q, total = 0.0, d
    with nogil:
        while i < n and j < n:
            q = ra if ra < rb else rb
            d = x[i] - x[j]
            total += q * d * d
            ra -= q
            rb -= q
            if ra <= 0.0:
                i += 1
                if i < n:
                    ra = a[i]
            if rb <= 0.0:
                j += 1
                if j < n:
                    rb = b[j]
    return total
