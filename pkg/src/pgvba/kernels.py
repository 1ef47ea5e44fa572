"""Hot-loop kernels with compiled/pure-Python backend selection.

The compiled extension ``pgvba._ckernels`` is used when it was built and
``PGVBA_PURE_PYTHON`` is not set in the environment; otherwise the
reference implementations in ``pgvba._pykernels`` are used.
"""
import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

if _ckernels is not None and not os.environ.get("PGVBA_PURE_PYTHON"):
    BACKEND = "compiled"
else:
    BACKEND = "python"


def _impl(backend):
    name = backend or BACKEND
    if name not in BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}")
    return BACKENDS[name]


def poisson(lam, rng, backend=None):
    """Exact Poisson variates with means ``lam`` drawn from ``rng``.

    The uniforms are taken from ``rng`` in fixed-size buffers, so a seeded
    generator gives the same integers under either backend.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("Poisson means must be finite and non-negative")
    flat = np.ascontiguousarray(lam.ravel())
    out = np.zeros(flat.size, dtype=np.int64)
    fill = _impl(backend).poisson_fill
    start = 0
    chunk = 2 * flat.size + 64
    while start < flat.size:
        uniforms = rng.random(chunk)
        start, _ = fill(flat, uniforms, out, start)
    return out.reshape(lam.shape)


def pg_nll(hx, y, sigma, backend=None):
    """Per-entry exact Poisson-Gaussian negative log-likelihood."""
    hx = np.ascontiguousarray(hx, dtype=np.float64).ravel()
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    return _impl(backend).pg_nll(hx, y, float(sigma))


def nltv_weights(ref, h, half_window=3, half_patch=2, backend=None):
    """Nonlocal patch-similarity weights, shape ``((2*hw+1)**2, ny, nx)``."""
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    return _impl(backend).nltv_weights(ref, float(h), int(half_window), int(half_patch))
