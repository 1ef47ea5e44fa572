"""Variational Bayesian restoration with majorized likelihood and prior.

The posterior over ``(x, gamma)`` is approximated by
``q(x) q(gamma) = N(m, Sigma) Gamma(a, b)``. Each outer iteration
updates, in order, the Gaussian factor, the likelihood auxiliaries ``w``,
the prior auxiliaries ``lambda`` and the rate ``b``. ``Sigma`` is never
formed: it is either replaced by the inverse of the diagonal of its
precision (``cov_mode="diag"``) or represented by exact posterior samples
drawn by perturbation-optimization (``cov_mode="mc"``).
"""
import csv
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import digamma, gammaln

from .likelihoods import DEFAULT_EPS, DataTerm, NoiseFamily
from .majorization import lambda_opt, varsigma_numeric
from .operators import StencilOperator
from .simulation import snr as snr_db
from .solver import MEAN_CG, SAMPLE_CG, CgParams, SpdSystem, cg_solve

logger = logging.getLogger(__name__)

COV_MODES = ("diag", "mc")
TRACE_HEADER = ("iter", "seconds", "gamma", "rel_change", "snr")


@dataclass(frozen=True)
class VbaConfig:
    kappa: float = 0.5
    hyper_alpha: float = 1e-3
    hyper_beta: float = 1e-3
    eps_floor: float = DEFAULT_EPS
    cov_mode: str = "diag"
    n_samples: int = 160
    stop_tol: float = 1e-6
    max_outer_iters: int = 500
    mean_cg: CgParams = MEAN_CG
    sample_cg: CgParams = SAMPLE_CG
    master_seed: int = 0
    lambda_floor: float = 1e-12
    sample_batch: int = 32
    keep_samples: bool = False

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if not (self.hyper_alpha > 0 and self.hyper_beta > 0):
            raise ValueError("hyper_alpha and hyper_beta must be positive")
        if not self.eps_floor > 0:
            raise ValueError("eps_floor must be positive")
        if self.cov_mode not in COV_MODES:
            raise ValueError(f"cov_mode must be one of {COV_MODES}")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if not self.lambda_floor > 0:
            raise ValueError("lambda_floor must be positive")
        if self.sample_batch < 1:
            raise ValueError("sample_batch must be >= 1")


@dataclass
class CovApprox:
    """Stand-in for ``Sigma``.

    ``diag`` mode stores ``d ~ diag(Sigma)``. ``mc`` mode stores the sample
    mean, the per-block second moments ``mean_s ||D_j n_s||^2`` and,
    optionally, the samples themselves.
    """

    mode: str
    diag: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    block_energy: Optional[np.ndarray] = None
    n_samples: int = 0
    samples: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GammaFactor:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Gamma factor needs a, b > 0 (a={self.a}, b={self.b})")

    @property
    def mean(self):
        return self.a / self.b


@dataclass
class GaussianFactor:
    m: np.ndarray
    cov: Optional[CovApprox] = None


@dataclass
class VbaState:
    m: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    gamma: GammaFactor
    cov: Optional[CovApprox] = None
    iteration: int = 0
    lambda_floor_hits: int = 0

    @property
    def q_x(self):
        return GaussianFactor(self.m, self.cov)


@dataclass
class VbaProblem:
    """Forward operator ``H``, analysis operator ``D`` and the data term.

    ``D`` may be ``None`` (no prior); ``lam`` then has shape ``(0,)``.
    """

    H: object
    D: Optional[StencilOperator]
    data: DataTerm
    config: VbaConfig = field(default_factory=VbaConfig)

    @property
    def N(self):
        return int(np.prod(self.H.in_shape))

    @property
    def kappa(self):
        return self.config.kappa


@dataclass
class TraceRecord:
    iter: int
    seconds: float
    gamma: float
    rel_change: float
    snr: Optional[float] = None


@dataclass
class VbaTrace:
    records: List[TraceRecord] = field(default_factory=list)
    cov_mode: str = "diag"
    n_samples: Optional[int] = None

    def append(self, record):
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def meta(self):
        """Run-level facts that do not fit the per-iteration CSV rows."""
        out = {"cov_mode": self.cov_mode}
        if self.n_samples is not None:
            out["n_samples"] = self.n_samples
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for r in self.records:
                snr = "nan" if r.snr is None else repr(float(r.snr))
                writer.writerow([r.iter, repr(r.seconds), repr(r.gamma), repr(r.rel_change), snr])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != TRACE_HEADER:
                raise ValueError(f"unexpected trace header {header}")
            for row in reader:
                snr = float(row[4])
                trace.append(TraceRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                         None if np.isnan(snr) else snr))
        return trace


@dataclass
class VbaResult:
    m: np.ndarray
    gamma: GammaFactor
    trace: VbaTrace
    state: VbaState


def _prior_weights(problem, lam, gamma_mean):
    """Per-block precision weights ``2 gamma kappa lambda_j**(kappa-1)``."""
    k = problem.kappa
    return 2.0 * gamma_mean * k * lam ** (k - 1.0)


def precision_apply(v, problem, state):
    """Apply ``H^T Diag(mu) H + 2 (a/b) D^T Lambda D`` to ``v`` (batched ok)."""
    H, D = problem.H, problem.D
    out = H.adjoint(problem.data.mu * H.apply(v))
    if D is not None:
        out += D.adjoint(_prior_weights(problem, state.lam, state.gamma.mean) * D.apply(v))
    return out


def precision_diag(problem, state):
    diag = problem.H.normal_diag(problem.data.mu)
    if problem.D is not None:
        diag = diag + problem.D.normal_diag(_prior_weights(problem, state.lam, state.gamma.mean))
    return diag


def diag_cov(problem, state):
    """Diagonal covariance ``1 / diag(Sigma^{-1})``."""
    diag = precision_diag(problem, state)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise ValueError("precision diagonal has zero or non-finite entries")
    return CovApprox(mode="diag", diag=1.0 / diag)


def _system(problem, state):
    return SpdSystem(lambda v: precision_apply(v, problem, state), precision_diag(problem, state))


def update_mean(problem, state, params=None):
    """Solve ``Sigma^{-1} m = H^T (mu w)`` by CG, warm-started at ``state.m``."""
    params = params or problem.config.mean_cg
    rhs = problem.H.adjoint(problem.data.mu * state.w)
    res = cg_solve(_system(problem, state), rhs, params, x0=state.m)
    return res.solution, res


def update_w(problem, m):
    """``w = Hm - phi'(Hm) / mu`` pixelwise."""
    return problem.data.w_hat(problem.H.apply(m))


def _floor_lambda(problem, lam):
    floor = problem.config.lambda_floor
    hits = int(np.count_nonzero(lam < floor))
    return np.maximum(lam, floor), hits


def update_lambda(problem, m, cov):
    """``lambda_j = ||D_j m||^2 + trace(D_j^T D_j Sigma)``; returns ``(lam, floor_hits)``."""
    D = problem.D
    if D is None:
        return np.zeros(0), 0
    if cov is not None and cov.mode == "mc":
        lam = cov.block_energy
    else:
        energy = D.block_norm2(D.apply(m))
        if cov is not None:
            energy = energy + np.sum(D.squared_apply(cov.diag), axis=0)
        lam = energy
    lam, hits = _floor_lambda(problem, lambda_opt(lam))
    return lam, hits


def update_gamma(problem, lam):
    """``a = N/(2 kappa) + alpha`` and ``b = sum_j lambda_j**kappa + beta``."""
    cfg = problem.config
    a = problem.N / (2.0 * cfg.kappa) + cfg.hyper_alpha
    b = float(np.sum(np.asarray(lam, dtype=np.float64) ** cfg.kappa)) + cfg.hyper_beta
    return GammaFactor(a, b)


def sample_seed(master_seed, iteration, index):
    """Seed sequence for one posterior sample."""
    return np.random.SeedSequence([int(master_seed), int(iteration), int(index)])


def sample_posterior(problem, state, n_samples=None, seed=None, iteration=None):
    """Perturbation-optimization sampling of ``N(m, Sigma)``.

    For every sample, draws ``nu ~ N(mu w, Diag(mu))`` and
    ``eta ~ N(0, 2 (a/b) Lambda)`` and solves ``Sigma^{-1} n = H^T nu +
    D^T eta``; then ``n ~ N(Sigma H^T mu w, Sigma)`` exactly. Samples are
    solved in batches and reduced in index order, so results depend only
    on ``seed``, ``iteration`` and ``n_samples``.
    """
    cfg = problem.config
    n_samples = cfg.n_samples if n_samples is None else int(n_samples)
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    seed = cfg.master_seed if seed is None else seed
    iteration = state.iteration if iteration is None else iteration
    H, D, data = problem.H, problem.D, problem.data
    shape = H.in_shape
    out_shape = H.out_shape
    u = data.mu * state.w
    sqrt_mu = np.sqrt(data.mu)
    if D is not None:
        sqrt_prior = np.sqrt(_prior_weights(problem, state.lam, state.gamma.mean))
    system = _system(problem, state)

    total = np.zeros(shape)
    energy = np.zeros(shape) if D is not None else None
    kept = [] if cfg.keep_samples else None
    for start in range(0, n_samples, cfg.sample_batch):
        idx = range(start, min(start + cfg.sample_batch, n_samples))
        z = np.empty((len(idx),) + shape)
        for row, s in enumerate(idx):
            rng = np.random.default_rng(sample_seed(seed, iteration, s))
            nu = u + sqrt_mu * rng.standard_normal(out_shape)
            zs = H.adjoint(nu)
            if D is not None:
                eta = sqrt_prior * rng.standard_normal(D.out_shape)
                zs = zs + D.adjoint(eta)
            z[row] = zs
        res = cg_solve(system, z, cfg.sample_cg, core_ndim=len(shape))
        if not res.converged:
            logger.debug("sample CG stopped at residual %.3g", res.residual)
        for n in res.solution:
            total += n
            if D is not None:
                energy += D.block_norm2(D.apply(n))
        if kept is not None:
            kept.append(res.solution)
    return CovApprox(
        mode="mc",
        mean=total / n_samples,
        block_energy=None if energy is None else energy / n_samples,
        n_samples=n_samples,
        samples=None if kept is None else np.concatenate(kept),
    )


def prior_energy(D, x, kappa):
    """``sum_j ||D_j x||**(2 kappa)``."""
    return float(np.sum(D.block_norm2(D.apply(x)) ** kappa))


def gamma_init(x0, D, kappa):
    """Maximizer of ``(N/2kappa) log g - g sum_j ||D_j x0||**(2 kappa)``."""
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial image contains non-finite values")
    energy = prior_energy(D, x0, kappa)
    if energy <= 0:
        warnings.warn("initial image has zero prior energy; using gamma0 = 1", RuntimeWarning)
        return 1.0
    return x0.size / (2.0 * kappa * energy)


def initial_state(problem, x0=None):
    """``m = x0`` (the truncated data), ``w = w_hat(Hx0)``, ``lambda_j = ||D_j x0||^2``."""
    cfg = problem.config
    data = problem.data
    if x0 is None:
        x0 = data.y if data.y.shape == problem.H.in_shape else problem.H.adjoint(data.y)
    x0 = np.array(x0, dtype=np.float64)
    w = update_w(problem, x0)
    a = problem.N / (2.0 * cfg.kappa) + cfg.hyper_alpha
    if problem.D is None:
        lam, hits, gamma0 = np.zeros(0), 0, 1.0
    else:
        lam, hits = _floor_lambda(problem, problem.D.block_norm2(problem.D.apply(x0)))
        gamma0 = gamma_init(x0, problem.D, cfg.kappa)
    return VbaState(m=x0, w=w, lam=lam, gamma=GammaFactor(a, a / gamma0), lambda_floor_hits=hits)


def step(problem, state):
    """One outer iteration; returns the new state and the CG result (diag mode)."""
    cfg = problem.config
    cg = None
    if cfg.cov_mode == "diag":
        cov = diag_cov(problem, state)
        m, cg = update_mean(problem, state)
    else:
        cov = sample_posterior(problem, state)
        m = cov.mean
    w = update_w(problem, m)
    lam, hits = update_lambda(problem, m, cov)
    gamma = update_gamma(problem, lam)
    new = VbaState(m=m, w=w, lam=lam, gamma=gamma, cov=cov, iteration=state.iteration + 1,
                   lambda_floor_hits=state.lambda_floor_hits + hits)
    return new, cg


def run(y_raw, H, D, family, config=None, ground_truth=None, x0=None, callback=None):
    """Restore ``y_raw``; returns a :class:`VbaResult`.

    Stops when ``||m_{k+1} - m_k|| / ||m_k|| <= config.stop_tol`` or after
    ``config.max_outer_iters`` iterations.
    """
    config = config or VbaConfig()
    if isinstance(family, str):
        family = NoiseFamily(family)
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if y_raw.shape != tuple(H.out_shape):
        raise ValueError(f"data shape {y_raw.shape} != operator output {H.out_shape}")
    if D is not None and tuple(D.in_shape) != tuple(H.in_shape):
        raise ValueError("prior and forward operator act on different image shapes")
    data = DataTerm.build(y_raw, family, config.eps_floor)
    problem = VbaProblem(H, D, data, config)
    state = initial_state(problem, x0)
    trace = VbaTrace(cov_mode=config.cov_mode,
                     n_samples=config.n_samples if config.cov_mode == "mc" else None)
    t0 = time.perf_counter()
    for k in range(config.max_outer_iters):
        new, cg = step(problem, state)
        denom = np.linalg.norm(state.m)
        diff = np.linalg.norm(new.m - state.m)
        rel = float(diff / denom) if denom > 0 else (0.0 if diff == 0 else np.inf)
        snr = None if ground_truth is None else snr_db(ground_truth, new.m)
        trace.append(TraceRecord(k + 1, time.perf_counter() - t0, new.gamma.mean, rel, snr))
        if cg is not None and not cg.converged:
            logger.debug("iteration %d: mean CG residual %.3g after %d sweeps", k + 1, cg.residual, cg.iterations)
        state = new
        if callback is not None:
            callback(state, trace.records[-1])
        if rel <= config.stop_tol:
            break
    if state.lambda_floor_hits:
        logger.info("lambda floor applied %d times", state.lambda_floor_hits)
    return VbaResult(m=state.m, gamma=state.gamma, trace=trace, state=state)


# ---------------------------------------------------------------------------
# dense oracles for small problems

MAX_DENSE = 64


def dense_matrix(apply, n, shape):
    cols = [np.ravel(apply(np.eye(n)[i].reshape(shape))) for i in range(n)]
    return np.array(cols).T


def dense_precision(problem, state):
    if problem.N > MAX_DENSE:
        raise ValueError(f"dense oracles need N <= {MAX_DENSE}")
    shape = problem.H.in_shape
    return dense_matrix(lambda v: precision_apply(v, problem, state), problem.N, shape)


def dense_update_q(problem, state):
    """Exact Gaussian factor ``(m, Sigma)`` of the bound, dense."""
    sigma = np.linalg.inv(dense_precision(problem, state))
    sigma = 0.5 * (sigma + sigma.T)
    rhs = problem.H.adjoint(problem.data.mu * state.w).ravel()
    return (sigma @ rhs).reshape(problem.H.in_shape), sigma


def dense_block_energy(problem, m, sigma):
    """Exact ``E||D_j x||^2`` under ``N(m, Sigma)``."""
    D = problem.D
    shape = problem.H.in_shape
    dmat = dense_matrix(D.apply, problem.N, shape)  # rows ordered (s, r, c)
    trace = np.einsum("in,nk,ik->i", dmat, sigma, dmat).reshape(D.out_shape).sum(axis=0)
    return D.block_norm2(D.apply(m)) + trace


def kl_bound_oracle(problem, m, sigma, gamma, w, lam):
    """Upper bound on ``KL(q || posterior)`` up to an additive constant.

    Uses the dense covariance ``sigma`` and the grid ``varsigma``; only
    for problems with at most 64 unknowns.
    """
    if problem.N > MAX_DENSE:
        raise ValueError(f"kl_bound_oracle needs N <= {MAX_DENSE}")
    cfg = problem.config
    H, D, data = problem.H, problem.D, problem.data
    shape = H.in_shape
    hmat = dense_matrix(H.apply, problem.N, shape)
    hm = H.apply(m).ravel()
    hsh = np.einsum("in,nk,ik->i", hmat, sigma, hmat)
    mu = data.mu.ravel()
    ys = data.y.ravel()
    ws = np.asarray(w).ravel()
    vs = np.array([varsigma_numeric(ws[i], ys[i], data.family, mu=mu[i]) for i in range(ws.size)])
    e_t = np.sum(mu * (0.5 * (hm - ws) ** 2 + 0.5 * hsh + vs))

    a, b = gamma.a, gamma.b
    k = cfg.kappa
    e_q = 0.0
    if D is not None:
        energy = dense_block_energy(problem, m, sigma)
        e_q = (a / b) * np.sum((k * energy + (1.0 - k) * lam) / lam ** (1.0 - k))
    e_log_gamma = digamma(a) - np.log(b)
    gamma_terms = -(cfg.hyper_alpha - 1.0 + problem.N / (2.0 * k)) * e_log_gamma + cfg.hyper_beta * a / b
    _, logdet = np.linalg.slogdet(sigma)
    entropy_gamma = a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a)
    return float(e_t + e_q + gamma_terms - 0.5 * logdet - entropy_gamma)
