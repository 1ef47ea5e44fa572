"""Matrix-free (preconditioned) conjugate gradient."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class CgError(RuntimeError):
    """Raised when CG meets non-finite values or a non-positive curvature."""


@dataclass(frozen=True)
class CgParams:
    rel_tol: float = 1e-6
    max_iters: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


MEAN_CG = CgParams(1e-6, 500)
SAMPLE_CG = CgParams(1e-4, 200)


@dataclass
class SpdSystem:
    """Symmetric positive definite operator with an optional Jacobi diagonal."""

    apply: Callable[[np.ndarray], np.ndarray]
    diag_hint: Optional[np.ndarray] = None


@dataclass
class CgResult:
    solution: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _dot(a, b, ndim):
    axes = tuple(range(a.ndim - ndim, a.ndim))
    return np.sum(a * b, axis=axes)


def cg_solve(system, rhs, params=MEAN_CG, x0=None, core_ndim=None):
    """Solve ``A x = rhs`` for SPD ``A``.

    Leading axes of ``rhs`` beyond ``core_ndim`` are treated as a batch of
    independent right-hand sides sharing the operator; each column keeps
    its own step sizes and stops updating once it meets ``rel_tol``.

    Returns
    -------
    CgResult
        ``residual`` is the worst relative residual ``||b - Ax|| / ||b||``
        over the batch and ``iterations`` the number of sweeps performed.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    nd = rhs.ndim if core_ndim is None else core_ndim
    expand = (Ellipsis,) + (None,) * nd

    x = np.zeros_like(rhs) if x0 is None else np.array(np.broadcast_to(x0, rhs.shape), dtype=np.float64)
    inv_diag = None
    if system.diag_hint is not None:
        d = np.asarray(system.diag_hint, dtype=np.float64)
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise CgError("Jacobi diagonal must be positive and finite")
        inv_diag = 1.0 / d

    bnorm = np.sqrt(_dot(rhs, rhs, nd))
    safe_bnorm = np.where(bnorm > 0, bnorm, 1.0)
    if x0 is None:
        r = rhs.copy()
    else:
        r = rhs - system.apply(x)
    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = np.asarray(_dot(r, z, nd))
    rel = np.asarray(np.sqrt(_dot(r, r, nd)) / safe_bnorm)
    active = np.asarray(rel > params.rel_tol)
    # zero right-hand side: exact solution is zero
    zero_rhs = bnorm == 0
    if np.any(zero_rhs):
        x[zero_rhs] = 0.0
        rel = np.where(zero_rhs, 0.0, rel)
        active &= ~zero_rhs

    it = 0
    while np.any(active) and it < params.max_iters:
        ap = system.apply(p)
        pap = _dot(p, ap, nd)
        if not np.all(np.isfinite(pap)) or np.any(pap[active] <= 0):
            raise CgError("conjugate gradient hit non-positive or non-finite curvature")
        alpha = np.where(active, rz / np.where(active, pap, 1.0), 0.0)
        x += alpha[expand] * p
        r -= alpha[expand] * ap
        if not np.all(np.isfinite(r)):
            raise CgError("conjugate gradient produced non-finite residual")
        z = r * inv_diag if inv_diag is not None else r
        rz_new = _dot(r, z, nd)
        beta = np.where(active, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        p = np.where(active[expand], z + beta[expand] * p, p)
        rz = np.where(active, rz_new, rz)
        rel = np.where(active, np.sqrt(_dot(r, r, nd)) / safe_bnorm, rel)
        active &= rel > params.rel_tol
        it += 1

    worst = float(np.max(rel))
    return CgResult(solution=x, iterations=it, residual=worst, converged=worst <= params.rel_tol)
