"""Bayesian GLM inference with low-rank (LR-GLM) design approximations."""
from .errors import ConvergenceError, OracleLimitError
from .linalg import SVDConfig, TruncatedSVD, truncated_svd
from .models import GaussianPrior, StudentTPrior, get_family
from .conjugate import exact_posterior_dense, exact_posterior_woodbury, lr_posterior
from .lr_laplace import exact_laplace_dense, lr_laplace_fit, lr_laplace_fit_general
from .lr_mcmc import ProposalConfig, run_mh
from .bounds import map_error_bound, w2_bound, w2_gaussians

__version__ = "0.1.0"
