"""Half-quadratic majorants of the likelihood and of the prior.

The likelihood bound is ``phi(v) = min_w T(v, w)`` with

    T(v, w; y) = mu(y) * ((v - w)**2 / 2 + varsigma(w; y)),
    varsigma(w; y) = sup_t (-(w - t)**2 / 2 + phi(t; y) / mu(y)),

minimized at ``w_hat(v) = v - phi'(v; y) / mu(y)``. The restoration loop
only needs ``w_hat``; ``varsigma`` and ``T`` are evaluated numerically and
serve as test oracles.

The prior bound is the tangent inequality of the concave map
``u -> u**kappa`` applied to ``u = ||D_j x||**2``.
"""
import numpy as np

from .likelihoods import DEFAULT_EPS, dphi, mu_curvature, phi

GRID_POINTS = 10_000
REFINE_PASSES = 4
REFINE_FACTOR = 100


def _mu(y, family, mu, eps):
    return mu_curvature(y, family, eps) if mu is None else np.asarray(mu, dtype=np.float64)


def w_hat(v, y, family, mu=None, eps=DEFAULT_EPS):
    """Minimizer over ``w`` of ``T(v, w; y)``."""
    v = np.asarray(v, dtype=np.float64)
    return v - dphi(v, y, family) / _mu(y, family, mu, eps)


def varsigma_numeric(w, y, family, mu=None, eps=DEFAULT_EPS, points=GRID_POINTS):
    """Grid supremum defining ``varsigma(w; y)`` (scalar arguments).

    The search window is ``w +/- 50 s`` with ``s = max(1, |w|, |y|, 1/mu)``,
    followed by four zoom passes around the incumbent, each shrinking the
    spacing 100-fold. The objective is concave in ``t`` whenever the
    curvature condition on ``mu`` holds, so the zoom is reliable.
    """
    w = float(w)
    y = float(y)
    m = float(_mu(y, family, mu, eps))
    scale = max(1.0, abs(w), abs(y), 1.0 / m)

    def objective(t):
        return -0.5 * (w - t) ** 2 + phi(t, y, family) / m

    t = np.linspace(w - 50.0 * scale, w + 50.0 * scale, points)
    f = objective(t)
    best = int(np.argmax(f))
    value = f[best]
    for _ in range(REFINE_PASSES):
        h = t[1] - t[0]
        t = np.linspace(t[best] - h, t[best] + h, 2 * REFINE_FACTOR + 1)
        f = objective(t)
        best = int(np.argmax(f))
        value = max(value, f[best])
    return float(value)


def surrogate_T(v, w, y, family, mu=None, eps=DEFAULT_EPS):
    """Majorant ``T(v, w; y) >= phi(v; y)`` with equality at ``w_hat(v)``."""
    m = float(_mu(y, family, mu, eps))
    s = varsigma_numeric(w, y, family, mu=m)
    return m * (0.5 * (float(v) - float(w)) ** 2 + s)


def prior_majorant_Q(dxnorm2, lam, gamma, kappa):
    """``gamma * (kappa ||D_j x||^2 + (1 - kappa) lam) / lam**(1 - kappa)``."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    dxnorm2 = np.asarray(dxnorm2, dtype=np.float64)
    return gamma * (kappa * dxnorm2 + (1.0 - kappa) * lam) / lam ** (1.0 - kappa)


def lambda_opt(expected_dxnorm2):
    """Optimal auxiliary ``lambda_j = E||D_j x||^2``.

    Under a Gaussian ``q(x) = N(m, Sigma)`` the expectation splits into
    ``||D_j m||^2 + trace(D_j^T D_j Sigma)``; the caller forms the sum.
    """
    e = np.asarray(expected_dxnorm2, dtype=np.float64)
    if np.any(e < 0):
        raise ValueError("expected block energy is negative; covariance approximation is broken")
    return e
