"""Pure-Python reference versions of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same
signature and, for the Poisson sampler, bit-identical output.
"""
import math

import numpy as np
from scipy import ndimage
from scipy.special import gammaln

_LOG_REL_TAIL = math.log(1e-15)


def poisson_fill(lam, uniforms, out, start):
    """Draw Poisson variates for ``lam[start:]`` from a buffer of uniforms.

    Means up to 30 use inversion by sequential search; larger means use
    Hoermann's transformed rejection (PTRS). Stops early when the buffer
    cannot complete the current pixel.

    Returns
    -------
    (next_index, used) : tuple of int
        First pixel left undrawn and number of uniforms consumed.
    """
    n = lam.shape[0]
    nu = uniforms.shape[0]
    pos = 0
    i = start
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
            k = 0
            p = math.exp(-mu)
            cdf = p
            while u > cdf:
                k += 1
                p *= mu / k
                if p == 0.0:
                    break
                cdf += p
            out[i] = k
            i += 1
            continue
        slam = math.sqrt(mu)
        loglam = math.log(mu)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        invalpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2.0)
        done = False
        save = pos
        while pos + 1 < nu:
            uu = uniforms[pos] - 0.5
            v = uniforms[pos + 1]
            pos += 2
            us = 0.5 - abs(uu)
            k = math.floor((2.0 * a / us + b) * uu + mu + 0.43)
            if us >= 0.07 and v <= vr:
                done = True
                break
            if k < 0 or (us < 0.013 and v > us):
                continue
            lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
            if lhs <= -mu + k * loglam - math.lgamma(k + 1.0):
                done = True
                break
        if not done:
            pos = save
            break
        out[i] = int(k)
        i += 1
    return i, pos


def _log_term(n, hx, loghx, y, inv2s2, lognorm):
    return -hx + n * loghx - math.lgamma(n + 1.0) - (y - n) ** 2 * inv2s2 - lognorm


def pg_nll(hx, y, sigma):
    """Per-pixel negative log of the exact Poisson-Gaussian likelihood."""
    out = np.empty(hx.shape[0])
    inv2s2 = 0.5 / (sigma * sigma)
    lognorm = 0.5 * math.log(2.0 * math.pi * sigma * sigma)
    for i in range(hx.shape[0]):
        h = hx[i]
        yi = y[i]
        if h == 0.0:
            out[i] = yi * yi * inv2s2 + lognorm
            continue
        loghx = math.log(h)
        lo = max(0, math.ceil(yi - 8.0 * sigma))
        hi = max(lo, math.ceil(yi + 8.0 * sigma + 40.0 + 4.0 * h))
        n = np.arange(lo, hi + 1, dtype=float)
        t = -h + n * loghx - gammaln(n + 1.0) - (yi - n) ** 2 * inv2s2 - lognorm
        tmax = t.max()
        total = tmax + math.log(np.exp(t - tmax).sum())
        while True:
            hi += 1
            t_new = _log_term(hi, h, loghx, yi, inv2s2, lognorm)
            total = np.logaddexp(total, t_new)
            if t_new - total < _LOG_REL_TAIL:
                break
        while lo > 0:
            t_lo = _log_term(lo, h, loghx, yi, inv2s2, lognorm)
            if t_lo - total < _LOG_REL_TAIL:
                break
            lo -= 1
            total = np.logaddexp(total, _log_term(lo, h, loghx, yi, inv2s2, lognorm))
        out[i] = -total
    return out


def nltv_weights(ref, h, half_window, half_patch):
    """Row-normalized nonlocal weights for every window offset.

    Returns an array ``(n_dirs, ny, nx)`` whose slice ``d`` holds the
    weight between pixel ``j`` and pixel ``j + offset_d``.
    """
    size = 2 * half_patch + 1
    inv_h2 = 1.0 / (h * h)
    weights = []
    for dr in range(-half_window, half_window + 1):
        for dc in range(-half_window, half_window + 1):
            shifted = np.roll(ref, (-dr, -dc), axis=(0, 1))
            dist = ndimage.uniform_filter((ref - shifted) ** 2, size=size, mode="wrap")
            weights.append(np.exp(-dist * inv_h2))
    w = np.stack(weights)
    return w / w.sum(axis=0)
