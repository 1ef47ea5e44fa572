"""Per-pixel data-fidelity functions for non-Gaussian noise models.

Each family provides ``phi(v; y)``, its derivative, the Lipschitz constant
``beta(y)`` of the derivative and a curvature ``mu(y)`` such that
``v**2 / 2 - phi(v; y) / mu(y)`` is convex. The Poisson-type families
(``anscombe``, ``gast``, ``spoiss``, ``wl2``) are only Lipschitz
differentiable on ``v >= 0`` and are continued on ``v < 0`` by the
quadratic ``phi(0) + phi'(0) v + beta v**2 / 2``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels

FAMILIES = ("gaussian", "cauchy", "anscombe", "gast", "spoiss", "wl2")
EXTENDED = frozenset({"anscombe", "gast", "spoiss", "wl2"})
NEEDS_SIGMA = frozenset({"gaussian", "cauchy", "gast", "spoiss", "wl2"})
DEFAULT_EPS = 1e-3

# WL2 keeps v^2/2 - phi/mu convex only when |y + sigma^2| >= sigma * 54**(-1/6)
WL2_MARGIN = 54.0 ** (-1.0 / 6.0)


@dataclass(frozen=True)
class NoiseFamily:
    """Likelihood family tag plus the Gaussian noise standard deviation."""

    tag: str
    sigma: float = 1.0

    def __post_init__(self):
        if self.tag not in FAMILIES:
            raise ValueError(f"unknown noise family {self.tag!r}; expected one of {FAMILIES}")
        if self.tag in NEEDS_SIGMA and not self.sigma > 0:
            raise ValueError(f"family {self.tag!r} needs sigma > 0")

    @property
    def sigma2(self):
        return self.sigma * self.sigma


def _family(family):
    if isinstance(family, str):
        return NoiseFamily(family)
    return family


def truncate_data(y_raw, family):
    """Clip observations into the validity domain of ``family``."""
    fam = _family(family)
    y = np.array(y_raw, dtype=np.float64)
    s2 = fam.sigma2
    if fam.tag == "anscombe":
        y = np.maximum(y, -3.0 / 8.0)
    elif fam.tag == "gast":
        y = np.maximum(y, -3.0 / 8.0 - s2)
    elif fam.tag == "spoiss":
        y = np.maximum(y, -s2)
    elif fam.tag == "wl2":
        y = np.maximum(y, -s2 + WL2_MARGIN * fam.sigma)
    return y


def _core(v, y, fam):
    """Value and derivative of the closed-form expressions on their natural domain."""
    s2 = fam.sigma2
    tag = fam.tag
    if tag == "gaussian":
        r = v - y
        return r * r / (2.0 * s2), r / s2
    if tag == "cauchy":
        r = v - y
        return np.log1p(r * r / s2), 2.0 * r / (s2 + r * r)
    if tag in ("anscombe", "gast"):
        c = 3.0 / 8.0 if tag == "anscombe" else 3.0 / 8.0 + s2
        a = np.sqrt(y + c)
        b = np.sqrt(v + c)
        return 2.0 * (a - b) ** 2, 2.0 - 2.0 * a / b
    if tag == "spoiss":
        t = v + s2
        yt = y + s2
        # 0 * log(t) := 0 at the domain edge
        log_term = np.where(yt == 0, 0.0, yt * np.log(t))
        return t - log_term, 1.0 - yt / t
    t = v + s2
    yt = y + s2
    value = (y - v) ** 2 / (2.0 * t) + 0.5 * np.log(t)
    deriv = 0.5 - yt * yt / (2.0 * t * t) + 1.0 / (2.0 * t)
    return value, deriv


def beta_lipschitz(y, family):
    """Lipschitz constant of ``phi'(.; y)`` on the (extended) real line."""
    fam = _family(family)
    y = np.asarray(y, dtype=np.float64)
    s2 = fam.sigma2
    tag = fam.tag
    if tag == "gaussian":
        return np.full_like(y, 1.0 / s2)
    if tag == "cauchy":
        return np.full_like(y, 2.0 / s2)
    if tag == "anscombe":
        return (3.0 / 8.0) ** -1.5 * np.sqrt(y + 3.0 / 8.0)
    if tag == "gast":
        c = 3.0 / 8.0 + s2
        return c**-1.5 * np.sqrt(y + c)
    if tag == "spoiss":
        return (y + s2) / (s2 * s2)
    yt2 = (y + s2) ** 2
    with np.errstate(divide="ignore"):
        second = np.where(yt2 > 0, 1.0 / (54.0 * np.where(yt2 > 0, yt2, 1.0) ** 2), np.inf)
    return np.maximum(yt2 / s2**3 - 1.0 / (2.0 * s2 * s2), second)


def mu_curvature(y, family, eps=DEFAULT_EPS):
    """Curvature ``mu(y)`` of the quadratic surrogate, floored at ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    fam = _family(family)
    y = np.asarray(y, dtype=np.float64)
    if fam.tag == "wl2":
        return np.maximum((y + fam.sigma2) ** 2 / fam.sigma2**3, eps)
    return np.maximum(beta_lipschitz(y, fam), eps)


def phi(v, y, family):
    """Data-fidelity value ``phi(v; y)``, differentiable on the real line."""
    fam = _family(family)
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if fam.tag not in EXTENDED:
        return _core(v, y, fam)[0]
    vp = np.maximum(v, 0.0)
    inside, _ = _core(vp, y, fam)
    p0, d0 = _core(np.zeros_like(vp), y, fam)
    vn = np.minimum(v, 0.0)
    ext = p0 + d0 * vn + 0.5 * beta_lipschitz(y, fam) * vn * vn
    return np.where(v >= 0, inside, ext)


def dphi(v, y, family):
    """Derivative of :func:`phi` with respect to ``v``."""
    fam = _family(family)
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if fam.tag not in EXTENDED:
        return _core(v, y, fam)[1]
    vp = np.maximum(v, 0.0)
    _, inside = _core(vp, y, fam)
    _, d0 = _core(np.zeros_like(vp), y, fam)
    ext = d0 + beta_lipschitz(y, fam) * np.minimum(v, 0.0)
    return np.where(v >= 0, inside, ext)


@dataclass(frozen=True, eq=False)
class DataTerm:
    """Observed data after truncation together with per-pixel constants."""

    y: np.ndarray
    family: NoiseFamily
    mu: np.ndarray
    beta: np.ndarray
    eps: float = DEFAULT_EPS

    @classmethod
    def build(cls, y_raw, family, eps=DEFAULT_EPS):
        fam = _family(family)
        y = truncate_data(y_raw, fam)
        return cls(y=y, family=fam, mu=mu_curvature(y, fam, eps), beta=beta_lipschitz(y, fam), eps=eps)

    def phi(self, v):
        return phi(v, self.y, self.family)

    def dphi(self, v):
        return dphi(v, self.y, self.family)

    def w_hat(self, v):
        return np.asarray(v, dtype=np.float64) - self.dphi(v) / self.mu


def pg_nll_terms(hx, y_raw, sigma, backend=None):
    """Exact per-pixel ``-log p(y_i | [Hx]_i)`` of the Poisson-Gaussian model."""
    hx = np.asarray(hx, dtype=np.float64)
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if hx.shape != y_raw.shape:
        raise ValueError(f"intensity shape {hx.shape} != data shape {y_raw.shape}")
    # FFT blurs leave ~1e-16 negatives on zero regions
    tol = 1e-12 * max(1.0, float(np.max(np.abs(hx), initial=0.0)))
    if np.any(hx < -tol):
        raise ValueError("Poisson intensities must be non-negative")
    hx = np.maximum(hx, 0.0)
    return kernels.pg_nll(hx, y_raw, sigma, backend=backend).reshape(hx.shape)


def exact_pg_nll(x, y_raw, H, sigma, backend=None):
    """Exact Poisson-Gaussian negative log-likelihood of ``x`` (validation only)."""
    return float(np.sum(pg_nll_terms(H.apply(x), y_raw, sigma, backend=backend)))
