# cython: language_level=3
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, fabs, floor, lgamma, log, log1p, sqrt, M_PI

cnp.import_array()

cdef double LOG_REL_TAIL = log(1e-15)


def poisson_fill(const double[::1] lam, const double[::1] uniforms,
                 cnp.int64_t[::1] out, Py_ssize_t start):
    cdef Py_ssize_t n = lam.shape[0]
    cdef Py_ssize_t nu = uniforms.shape[0]
    cdef Py_ssize_t pos = 0, save
    cdef Py_ssize_t i = start
    cdef double mu, u, p, cdf, slam, loglam, a, b, invalpha, vr, uu, v, us, k, lhs
    cdef long kk
    cdef bint done
    with nogil:
        while i < n:
            mu = lam[i]
            if mu <= 0.0:
                out[i] = 0
                i += 1
                continue
            if mu <= 30.0:
                if pos >= nu:
                    break
                u = uniforms[pos]
                pos += 1
                kk = 0
                p = exp(-mu)
                cdf = p
                while u > cdf:
                    kk += 1
                    p *= mu / kk
                    if p == 0.0:
                        break
                    cdf += p
                out[i] = kk
                i += 1
                continue
            slam = sqrt(mu)
            loglam = log(mu)
            b = 0.931 + 2.53 * slam
            a = -0.059 + 0.02483 * b
            invalpha = 1.1239 + 1.1328 / (b - 3.4)
            vr = 0.9277 - 3.6224 / (b - 2.0)
            done = False
            save = pos
            k = 0.0
            while pos + 1 < nu:
                uu = uniforms[pos] - 0.5
                v = uniforms[pos + 1]
                pos += 2
                us = 0.5 - fabs(uu)
                k = floor((2.0 * a / us + b) * uu + mu + 0.43)
                if us >= 0.07 and v <= vr:
                    done = True
                    break
                if k < 0 or (us < 0.013 and v > us):
                    continue
                lhs = log(v) + log(invalpha) - log(a / (us * us) + b)
                if lhs <= -mu + k * loglam - lgamma(k + 1.0):
                    done = True
                    break
            if not done:
                pos = save
                break
            out[i] = <cnp.int64_t>k
            i += 1
    return i, pos


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) nogil:
    i = i % n
    if i < 0:
        i += n
    return i


cdef inline double _log_term(double n, double hx, double loghx, double y,
                             double inv2s2, double lognorm) nogil:
    return -hx + n * loghx - lgamma(n + 1.0) - (y - n) * (y - n) * inv2s2 - lognorm


cdef inline double _logaddexp(double x, double y) nogil:
    if x >= y:
        return x + log1p(exp(y - x))
    return y + log1p(exp(x - y))


def pg_nll(const double[::1] hx, const double[::1] y, double sigma):
    cdef Py_ssize_t m = hx.shape[0]
    out = np.empty(m)
    cdef double[::1] res = out
    cdef double inv2s2 = 0.5 / (sigma * sigma)
    cdef double lognorm = 0.5 * log(2.0 * M_PI * sigma * sigma)
    cdef Py_ssize_t i
    cdef double h, yi, loghx, t, tmax, s, total, t_new
    cdef long lo, hi, n
    with nogil:
        for i in range(m):
            h = hx[i]
            yi = y[i]
            if h == 0.0:
                res[i] = yi * yi * inv2s2 + lognorm
                continue
            loghx = log(h)
            lo = <long>ceil(yi - 8.0 * sigma)
            if lo < 0:
                lo = 0
            hi = <long>ceil(yi + 8.0 * sigma + 40.0 + 4.0 * h)
            if hi < lo:
                hi = lo
            tmax = -1e308
            for n in range(lo, hi + 1):
                t = _log_term(n, h, loghx, yi, inv2s2, lognorm)
                if t > tmax:
                    tmax = t
            s = 0.0
            for n in range(lo, hi + 1):
                s += exp(_log_term(n, h, loghx, yi, inv2s2, lognorm) - tmax)
            total = tmax + log(s)
            while True:
                hi += 1
                t_new = _log_term(hi, h, loghx, yi, inv2s2, lognorm)
                total = _logaddexp(total, t_new)
                if t_new - total < LOG_REL_TAIL:
                    break
            while lo > 0:
                if _log_term(lo, h, loghx, yi, inv2s2, lognorm) - total < LOG_REL_TAIL:
                    break
                lo -= 1
                total = _logaddexp(total, _log_term(lo, h, loghx, yi, inv2s2, lognorm))
            res[i] = -total
    return out


def nltv_weights(const double[:, ::1] ref, double h, int half_window, int half_patch):
    cdef Py_ssize_t ny = ref.shape[0], nx = ref.shape[1]
    cdef int side = 2 * half_window + 1
    cdef int nd = side * side
    out = np.empty((nd, ny, nx))
    cdef double[:, :, ::1] w = out
    sq_buf = np.empty((ny, nx))
    row_buf = np.empty((ny, nx))
    total_buf = np.zeros((ny, nx))
    cdef double[:, ::1] sq = sq_buf
    cdef double[:, ::1] rows = row_buf
    cdef double[:, ::1] total = total_buf
    # wrapped index tables: shifted positions and running-sum entry/exit points
    idx_buf = np.empty(3 * (nx + ny), dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_buf
    cdef Py_ssize_t[::1] c_shift = idx[0:nx]
    cdef Py_ssize_t[::1] c_add = idx[nx:2 * nx]
    cdef Py_ssize_t[::1] c_sub = idx[2 * nx:3 * nx]
    cdef Py_ssize_t[::1] r_shift = idx[3 * nx:3 * nx + ny]
    cdef Py_ssize_t[::1] r_add = idx[3 * nx + ny:3 * nx + 2 * ny]
    cdef Py_ssize_t[::1] r_sub = idx[3 * nx + 2 * ny:3 * (nx + ny)]
    cdef double scale = 1.0 / ((2 * half_patch + 1) * (2 * half_patch + 1) * h * h)
    cdef Py_ssize_t r, c, d, rs
    cdef int dr, dc, p
    cdef double diff, acc
    with nogil:
        for c in range(nx):
            c_add[c] = _wrap(c + half_patch + 1, nx)
            c_sub[c] = _wrap(c - half_patch, nx)
        for r in range(ny):
            r_add[r] = _wrap(r + half_patch + 1, ny)
            r_sub[r] = _wrap(r - half_patch, ny)
        d = 0
        for dr in range(-half_window, half_window + 1):
            for r in range(ny):
                r_shift[r] = _wrap(r + dr, ny)
            for dc in range(-half_window, half_window + 1):
                for c in range(nx):
                    c_shift[c] = _wrap(c + dc, nx)
                for r in range(ny):
                    rs = r_shift[r]
                    for c in range(nx):
                        diff = ref[r, c] - ref[rs, c_shift[c]]
                        sq[r, c] = diff * diff
                # periodic box sums along rows, then columns
                for r in range(ny):
                    acc = 0.0
                    for p in range(-half_patch, half_patch + 1):
                        acc += sq[r, _wrap(p, nx)]
                    for c in range(nx):
                        rows[r, c] = acc
                        acc += sq[r, c_add[c]] - sq[r, c_sub[c]]
                for c in range(nx):
                    acc = 0.0
                    for p in range(-half_patch, half_patch + 1):
                        acc += rows[_wrap(p, ny), c]
                    for r in range(ny):
                        w[d, r, c] = acc
                        acc += rows[r_add[r], c] - rows[r_sub[r], c]
                for r in range(ny):
                    for c in range(nx):
                        w[d, r, c] = exp(-w[d, r, c] * scale)
                        total[r, c] += w[d, r, c]
                d += 1
        for d in range(nd):
            for r in range(ny):
                for c in range(nx):
                    w[d, r, c] /= total[r, c]
    return out
