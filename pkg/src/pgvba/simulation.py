"""Poisson-Gaussian degradation and image quality metrics."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from . import kernels
from .operators import Convolution, as_image

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_STD = 1.5


@dataclass(frozen=True)
class DegradeSpec:
    """Blur kernel taps, Gaussian variance, intensity scale and seed."""

    kernel: np.ndarray
    sigma2: float
    x_plus: float
    seed: Optional[int] = 0

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be non-negative")
        if not self.x_plus > 0:
            raise ValueError("x_plus must be positive")


def degrade(x, spec, rng=None):
    """``y = Poisson(Hx) + N(0, sigma2)`` with ``H`` the circular blur of ``spec``.

    ``x`` is used as is; rescale it to ``[0, x_plus]`` beforehand (see
    :func:`rescale`).
    """
    x = as_image(x)
    if np.any(x < 0):
        raise ValueError("degrade needs non-negative intensities")
    H = Convolution(spec.kernel, x.shape)
    hx = H.apply(x)
    # the FFT leaves round-off negatives where x vanishes
    hx = np.maximum(hx, 0.0)
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    z = kernels.poisson(hx, rng).astype(np.float64)
    if spec.sigma2 > 0:
        z += np.sqrt(spec.sigma2) * rng.standard_normal(x.shape)
    return z


def rescale(x, x_plus):
    """Affinely map ``x`` onto ``[0, x_plus]`` (constant images map to 0)."""
    x = as_image(x)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) * (x_plus / (hi - lo))


def snr(reference, estimate):
    """``20 log10(||ref|| / ||ref - est||)`` in dB; ``inf`` when they coincide."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    num = np.linalg.norm(ref)
    if num == 0:
        raise ValueError("reference has zero norm")
    den = np.linalg.norm(ref - est)
    if den == 0:
        return float("inf")
    return float(20.0 * np.log10(num / den))


def ssim(reference, estimate, dynamic_range):
    """Mean structural similarity over all fully contained 11x11 windows.

    Local statistics use a normalized Gaussian window (std 1.5) and the
    usual constants ``C1 = (0.01 L)**2``, ``C2 = (0.03 L)**2``.
    """
    ref = as_image(reference, "reference")
    est = as_image(estimate, "estimate")
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    if not dynamic_range > 0:
        raise ValueError("dynamic_range must be positive")
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    half = SSIM_WINDOW // 2

    def local(a):
        out = ndimage.gaussian_filter(a, SSIM_STD, mode="constant", truncate=half / SSIM_STD)
        return out[half:-half, half:-half]

    mx, my = local(ref), local(est)
    sxx = local(ref * ref) - mx * mx
    syy = local(est * est) - my * my
    sxy = local(ref * est) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def phantom(shape=(64, 64), x_plus=1.0):
    """Piecewise-smooth test image with values in ``[0, x_plus]``.

    A dim background ramp carries a bright disk, a rectangle, a ring and a
    few small dots, giving flat regions, edges and fine detail.
    """
    ny, nx = shape
    if ny < 8 or nx < 8:
        raise ValueError("phantom needs at least 8x8 pixels")
    r, c = np.mgrid[0:ny, 0:nx]
    u, v = r / ny, c / nx
    img = 0.1 + 0.1 * v
    disk = (u - 0.35) ** 2 + (v - 0.3) ** 2 < 0.18**2
    img[disk] = 0.9
    rect = (u > 0.55) & (u < 0.85) & (v > 0.15) & (v < 0.45)
    img[rect] = 0.6
    rad = np.hypot(u - 0.65, v - 0.7)
    img[(rad > 0.12) & (rad < 0.2)] = 0.75
    img[rad <= 0.12] = 0.3 + 0.4 * (1 - rad[rad <= 0.12] / 0.12)
    for pu, pv in ((0.15, 0.75), (0.2, 0.85), (0.12, 0.6)):
        img[np.hypot(u - pu, v - pv) < 0.035] = 1.0
    return x_plus * img
