"""Variational Bayesian image restoration under non-Gaussian noise.

The likelihood and the sparsity prior are replaced by quadratic majorants
so that the approximate posterior stays Gaussian in the image and Gamma
in the regularization weight, which is estimated jointly with the image.
"""
from . import kernels
from .likelihoods import FAMILIES, DataTerm, NoiseFamily, exact_pg_nll, pg_nll_terms
from .operators import (
    Convolution,
    Identity,
    StencilOperator,
    gaussian_kernel,
    make_blur,
    make_hessian,
    make_nltv,
    make_sltv,
    make_tv,
    nltv_weights,
    uniform_kernel,
)
from .simulation import DegradeSpec, degrade, phantom, snr, ssim
from .solver import CgParams, cg_solve
from .vba import VbaConfig, VbaResult, VbaTrace, run

__version__ = "0.1.0"
