"""Matrix-free linear operators on 2-D images.

All operators use periodic boundaries so that adjoints are exact. Inputs
may carry leading batch axes: an operator on images of shape ``(ny, nx)``
accepts arrays of shape ``(..., ny, nx)``.

Analysis operators return arrays of shape ``(..., S, ny, nx)``: block
``j`` (one per pixel) is the length-``S`` column ``out[..., :, r, c]``.
"""
from collections import defaultdict

import numpy as np

from . import kernels

__all__ = [
    "LinearOperator",
    "Identity",
    "Convolution",
    "StencilOperator",
    "as_image",
    "validate_kernel",
    "uniform_kernel",
    "gaussian_kernel",
    "make_blur",
    "make_tv",
    "make_hessian",
    "make_sltv",
    "make_nltv",
    "nltv_weights",
    "normal_diag",
    "SLTV_OFFSETS",
]

SLTV_OFFSETS = ((0, 1), (1, 0), (1, 1), (0, 2), (2, 0), (1, -1))


def as_image(x, name="image"):
    """Return ``x`` as a finite 2-D float64 array or raise ``ValueError``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def validate_kernel(taps):
    """Check a point spread function and return it as float64."""
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd side lengths, got {taps.shape}")
    if np.any(taps < 0):
        raise ValueError("kernel taps must be non-negative")
    if abs(taps.sum() - 1.0) > 1e-12:
        raise ValueError(f"kernel taps must sum to 1 (sum={taps.sum()!r})")
    return taps


def uniform_kernel(size):
    return np.full((size, size), 1.0 / (size * size))


def gaussian_kernel(size, std):
    half = size // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (t / std) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


class LinearOperator:
    """Base class: ``apply`` maps ``in_shape`` to ``out_shape``."""

    in_shape = ()
    out_shape = ()

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, u):
        raise NotImplementedError

    def normal_diag(self, weights):
        """Return ``diag(A^T Diag(weights) A)`` reshaped to ``in_shape``."""
        raise NotImplementedError

    @property
    def in_dim(self):
        return int(np.prod(self.in_shape))

    @property
    def out_dim(self):
        return int(np.prod(self.out_shape))

    def __call__(self, x):
        return self.apply(x)


class Identity(LinearOperator):
    def __init__(self, shape):
        self.in_shape = self.out_shape = tuple(shape)

    def apply(self, x):
        return np.array(x, dtype=np.float64)

    adjoint = apply

    def normal_diag(self, weights):
        return np.broadcast_to(np.asarray(weights, dtype=np.float64), self.in_shape).copy()


class Convolution(LinearOperator):
    """Circular 2-D convolution with a centered point spread function."""

    def __init__(self, taps, shape):
        taps = validate_kernel(taps)
        shape = tuple(shape)
        if taps.shape[0] > shape[0] or taps.shape[1] > shape[1]:
            raise ValueError(f"kernel {taps.shape} larger than image {shape}")
        self.taps = taps
        self.in_shape = self.out_shape = shape
        self._otf = self._transfer(taps)
        self._otf_sq = self._transfer(taps**2)

    def _transfer(self, taps):
        pad = np.zeros(self.in_shape)
        kh, kw = taps.shape
        pad[:kh, :kw] = taps
        pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
        return np.fft.rfft2(pad)

    def _filter(self, x, otf):
        x = np.asarray(x, dtype=np.float64)
        return np.fft.irfft2(np.fft.rfft2(x) * otf, s=self.in_shape)

    def apply(self, x):
        return self._filter(x, self._otf)

    def adjoint(self, u):
        return self._filter(u, np.conj(self._otf))

    def normal_diag(self, weights):
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64), self.out_shape)
        return self._filter(w, np.conj(self._otf_sq))


def make_blur(kernel, shape):
    return Convolution(kernel, shape)


def _shift(x, offset):
    """``out[..., r, c] = x[..., r + dr, c + dc]`` with periodic wrap."""
    dr, dc = offset
    if dr == 0 and dc == 0:
        return x
    return np.roll(x, (-dr, -dc), axis=(-2, -1))


def _unshift(x, offset):
    dr, dc = offset
    if dr == 0 and dc == 0:
        return x
    return np.roll(x, (dr, dc), axis=(-2, -1))


class StencilOperator(LinearOperator):
    """Stacked analysis operator built from shifted differences.

    Parameters
    ----------
    components : list of list of (offset, coeff)
        Row ``s`` of every block is ``sum(coeff * x[j + offset])``. A
        coefficient is a scalar or a per-pixel array of shape ``shape``.
    shape : tuple
        Image shape ``(ny, nx)``.
    kind : str
        Tag naming the prior (``tv``, ``hessian``, ``sltv``, ``nltv``).
    """

    def __init__(self, components, shape, kind):
        self.shape = tuple(shape)
        self.kind = kind
        self.S = len(components)
        self.J = int(np.prod(self.shape))
        self.in_shape = self.shape
        self.out_shape = (self.S,) + self.shape
        self._terms = [self._merge(terms) for terms in components]

    def _merge(self, terms):
        # offsets that coincide modulo the grid share one coefficient
        ny, nx = self.shape
        merged = defaultdict(float)
        for (dr, dc), coeff in terms:
            key = (dr % ny, dc % nx)
            merged[key] = merged[key] + np.asarray(coeff, dtype=np.float64)
        out = []
        for (dr, dc), coeff in merged.items():
            if np.all(coeff == 0):
                continue
            # smallest representative keeps rolls short
            dr = dr - ny if dr > ny // 2 else dr
            dc = dc - nx if dc > nx // 2 else dc
            out.append(((dr, dc), coeff))
        return out

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape[:-2] + self.out_shape)
        for s, terms in enumerate(self._terms):
            acc = out[..., s, :, :]
            for offset, coeff in terms:
                acc += coeff * _shift(x, offset)
        return out

    def adjoint(self, u):
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros(u.shape[:-3] + self.shape)
        for s, terms in enumerate(self._terms):
            us = u[..., s, :, :]
            for offset, coeff in terms:
                out += _unshift(coeff * us, offset)
        return out

    def squared_apply(self, d):
        """Rows of ``(A o A) d``: per row, ``sum(coeff**2 * d[j + offset])``."""
        d = np.asarray(d, dtype=np.float64)
        out = np.zeros(d.shape[:-2] + self.out_shape)
        for s, terms in enumerate(self._terms):
            acc = out[..., s, :, :]
            for offset, coeff in terms:
                acc += coeff**2 * _shift(d, offset)
        return out

    def normal_diag(self, weights):
        """Weights of shape ``(S, ny, nx)``, or ``(ny, nx)`` shared by a block."""
        w = np.asarray(weights, dtype=np.float64)
        if w.shape == self.shape:
            w = np.broadcast_to(w, self.out_shape)
        out = np.zeros(self.shape)
        for s, terms in enumerate(self._terms):
            for offset, coeff in terms:
                out += _unshift(coeff**2 * w[s], offset)
        return out

    def block_apply(self, x, j):
        r, c = divmod(j, self.shape[1])
        return self.apply(x)[..., :, r, c]

    @staticmethod
    def block_norm2(dx):
        """Squared norm of every block of an analysis output."""
        return np.sum(dx * dx, axis=-3)


def normal_diag(op, weights):
    return op.normal_diag(weights)


def _grad_terms(base=(0, 0)):
    r, c = base
    h = [((r, c + 1), 1.0), ((r, c), -1.0)]
    v = [((r + 1, c), 1.0), ((r, c), -1.0)]
    return h, v


def make_tv(shape):
    return StencilOperator(list(_grad_terms()), shape, "tv")


def make_hessian(shape):
    hh = [((0, -1), 1.0), ((0, 0), -2.0), ((0, 1), 1.0)]
    vv = [((-1, 0), 1.0), ((0, 0), -2.0), ((1, 0), 1.0)]
    r2 = np.sqrt(2.0)
    hv = [((1, 1), r2), ((1, 0), -r2), ((0, 1), -r2), ((0, 0), r2)]
    return StencilOperator([hh, hv, vv], shape, "hessian")


def make_sltv(shape, offsets=SLTV_OFFSETS):
    """Differences between the gradient at ``j`` and at ``j + o`` for 6 offsets."""
    h0, v0 = _grad_terms()
    components = []
    for o in offsets:
        ho, vo = _grad_terms(o)
        components.append(h0 + [(off, -c) for off, c in ho])
        components.append(v0 + [(off, -c) for off, c in vo])
    return StencilOperator(components, shape, "sltv")


def nltv_offsets(half_window=3):
    r = range(-half_window, half_window + 1)
    return [(dr, dc) for dr in r for dc in r]


def nltv_weights(reference, h=None, half_window=3, half_patch=2, backend=None):
    """Nonlocal weights from a reference image.

    ``w[d, j] = exp(-mean((P_j - P_{j+d})**2) / h**2)`` over
    ``(2*half_patch+1)``-square patches, normalized to sum to 1 over the
    ``(2*half_window+1)**2`` offsets (the zero offset included). ``h``
    defaults to 10% of the reference's dynamic range.
    """
    ref = as_image(reference, "reference")
    if h is None:
        span = float(ref.max() - ref.min())
        h = 0.1 * span if span > 0 else 1.0
    if h <= 0:
        raise ValueError("h must be positive")
    return kernels.nltv_weights(ref, h, half_window, half_patch, backend=backend)


def make_nltv(shape, reference=None, *, weights=None, h=None, half_window=3, half_patch=2):
    """Weighted nonlocal differences ``sqrt(w[d, j]) * (x_j - x_{j+d})``.

    Pass either a ``reference`` image (weights computed here) or
    precomputed ``weights`` of shape ``(n_dirs, ny, nx)``.
    """
    shape = tuple(shape)
    if weights is None:
        if reference is None:
            raise ValueError("make_nltv needs a reference image or weights")
        reference = as_image(reference, "reference")
        if reference.shape != shape:
            raise ValueError(f"reference shape {reference.shape} != {shape}")
        weights = nltv_weights(reference, h, half_window, half_patch)
    weights = np.asarray(weights, dtype=np.float64)
    offsets = nltv_offsets(half_window)
    if weights.shape != (len(offsets),) + shape:
        raise ValueError(f"weights shape {weights.shape} != {(len(offsets),) + shape}")
    if np.any(weights < 0):
        raise ValueError("NLTV weights must be non-negative")
    root = np.sqrt(weights)
    components = [[((0, 0), root[d]), (off, -root[d])] for d, off in enumerate(offsets)]
    op = StencilOperator(components, shape, "nltv")
    op.weights = weights
    return op
