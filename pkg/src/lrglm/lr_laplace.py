"""LR-Laplace: Laplace approximation of the low-rank GLM posterior.

The projected MAP problem lives in R^M (coordinates gamma = U^T beta), so
each gradient costs O(NM) once ``XU`` is available.  The covariance is kept
as Sigma_b - Sigma_b U W U^T Sigma_b with an M x M matrix W.

Dense exact and diagonal Laplace baselines share the same derivative code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import expit

from .errors import ConvergenceError, check_oracle
from .linalg import SVDConfig, TruncatedSVD, check_finite, truncated_svd
from .models import GaussianPrior, GlmFamily, Logistic, get_family
from .optim import Objective, OptimResult, minimize
from .posterior import FactoredGaussian, woodbury_core


@dataclass(frozen=True, eq=False)
class ImplicitPosterior(FactoredGaussian):
    """LR-Laplace fit.  ``core`` is the matrix W of the factored covariance;
    ``base`` is the prior (or, for non-Gaussian priors, the Gaussian with
    covariance equal to the inverse negative prior Hessian at the mode)."""

    gamma_star: np.ndarray = None
    family: GlmFamily = None
    svd: TruncatedSVD = None
    prior: object = None
    opt: OptimResult = None

    @property
    def W(self):
        return self.core


@dataclass(frozen=True, eq=False)
class LaplaceDense:
    mean: np.ndarray
    cov: np.ndarray

    def variances(self):
        return np.diag(self.cov).copy()


@dataclass(frozen=True, eq=False)
class DiagonalLaplace:
    mean: np.ndarray
    var: np.ndarray


def _family(family, tau=1.0) -> GlmFamily:
    return get_family(family, tau) if isinstance(family, str) else family


def _curvature(family, Y, A):
    """-phi'' >= 0 at A; raises if the likelihood is not locally log-concave."""
    w = -family.phi_vec(Y, A, 2)
    if np.any(w < -1e-12 * max(1.0, float(np.max(np.abs(w))))):
        raise ConvergenceError("phi'' > 0 encountered: likelihood is not log-concave here")
    return np.maximum(w, 0.0)


def _get_svd(X, M, svd, svd_config):
    if svd is not None:
        return svd
    if X is None or M is None:
        raise ValueError("provide either svd or both X and M")
    return truncated_svd(X, M, svd_config or SVDConfig())


def projected_objective(svd: TruncatedSVD, Y, family, prior: GaussianPrior,
                        offset=None) -> Objective:
    """Negative projected log posterior in gamma, for a zero-mean prior.

    f(gamma) = -sum phi(y, o + XU gamma) + 1/2 gamma^T (U^T Sigma_b U)^{-1} gamma
    """
    family = _family(family)
    Y = family.validate_response(Y).ravel()
    XU = svd.projected_design()
    S = svd.U.T @ prior.matvec(svd.U)
    cS = sla.cho_factor((S + S.T) / 2, lower=True)
    o = 0.0 if offset is None else offset

    def fun(gamma):
        a = o + XU @ gamma
        Sg = sla.cho_solve(cS, gamma)
        val = -family.loglik(Y, a) + 0.5 * float(gamma @ Sg)
        grad = -XU.T @ family._derivative(Y, a, 1) + Sg
        return val, grad

    return Objective(fun, svd.rank)


def lr_laplace_fit(X, Y, family, prior: GaussianPrior, M: int | None = None,
                   svd_config: SVDConfig | None = None, svd: TruncatedSVD | None = None,
                   tol: float = 1e-8, max_iter: int = 500) -> ImplicitPosterior:
    """LR-Laplace approximation with a Gaussian prior.

    ``X`` is only touched to build the truncated SVD, and may be ``None``
    when ``svd`` is given.  A nonzero prior mean is handled by centering:
    the linear predictor gets the offset X U U^T mu_b.
    """
    family = _family(family)
    svd = _get_svd(X, M, svd, svd_config)
    Y = family.validate_response(Y).ravel()
    if Y.size != svd.V.shape[0]:
        raise ValueError("Y length does not match the design")
    U = svd.U
    XU = svd.projected_design()
    mu0 = prior.mean_vec
    offset = XU @ (U.T @ mu0) if not prior.zero_mean else np.zeros(Y.size)

    obj = projected_objective(svd, Y, family, prior, offset)
    res = minimize(obj, np.zeros(svd.rank), tol=tol, max_iter=max_iter)
    if not res.converged:
        raise ConvergenceError(
            f"projected MAP did not converge: |grad|_inf={res.grad_norm:.3g} "
            f"after {res.iterations} iterations")
    gamma = res.argmin

    BU = prior.matvec(U)
    S = U.T @ BU
    S = (S + S.T) / 2
    # mu_hat = Sigma_b U S^{-1} gamma = U gamma + (I - UU^T) Sigma_b U S^{-1} gamma
    mean = mu0 + BU @ sla.solve(S, gamma, assume_a="pos")

    w = _curvature(family, Y, offset + XU @ gamma)
    H = XU.T @ (w[:, None] * XU)
    core = woodbury_core((H + H.T) / 2, S)
    return ImplicitPosterior(mean=mean, base=prior, U=U, core=core, BU=BU,
                             gamma_star=gamma, family=family, svd=svd, prior=prior,
                             opt=res)


def lr_laplace_fit_general(X, Y, family, prior, M: int | None = None,
                           svd_config: SVDConfig | None = None,
                           svd: TruncatedSVD | None = None, tol: float = 1e-8,
                           max_iter: int = 500, init=None) -> ImplicitPosterior:
    """LR-Laplace for any twice-differentiable prior with diagonal Hessian.

    The MAP is found over R^D; the likelihood part of the gradient costs
    O(NM + DM) through X U U^T beta = (XU)(U^T beta).  The covariance is
    K - K U W U^T K with K the inverse negative prior Hessian at the mode.
    Gaussian priors (any structure) use K = Sigma_b directly.
    """
    family = _family(family)
    svd = _get_svd(X, M, svd, svd_config)
    Y = family.validate_response(Y).ravel()
    U = svd.U
    XU = svd.projected_design()

    def fun(beta):
        a = XU @ (U.T @ beta)
        lp, glp = prior.log_density(beta)
        val = -family.loglik(Y, a) - lp
        grad = -U @ (XU.T @ family._derivative(Y, a, 1)) - glp
        return val, grad

    x0 = prior.mean_vec if init is None else np.asarray(init, dtype=float)
    res = minimize(Objective(fun, svd.n_features), x0, tol=tol, max_iter=max_iter)
    if not res.converged:
        raise ConvergenceError(
            f"MAP did not converge: |grad|_inf={res.grad_norm:.3g} "
            f"after {res.iterations} iterations")
    mean = res.argmin

    if isinstance(prior, GaussianPrior):
        base = prior
    else:
        nh = np.asarray(prior.neg_hess_diag(mean), dtype=float)
        if np.any(nh <= 0):
            raise ConvergenceError("prior Hessian is not negative definite at the mode")
        base = GaussianPrior.diagonal(1.0 / nh)
    KU = base.matvec(U)
    S = U.T @ KU
    gamma = U.T @ mean
    w = _curvature(family, Y, XU @ gamma)
    H = XU.T @ (w[:, None] * XU)
    core = woodbury_core((H + H.T) / 2, (S + S.T) / 2)
    return ImplicitPosterior(mean=mean, base=base, U=U, core=core, BU=KU,
                             gamma_star=gamma, family=family, svd=svd, prior=prior,
                             opt=res)


# --------------------------------------------------------------------------
# dense baselines


def _neg_log_post(X, Y, family, prior):
    def fun(beta):
        a = X @ beta
        lp, glp = prior.log_density(beta)
        return -family.loglik(Y, a) - lp, -X.T @ family._derivative(Y, a, 1) - glp
    return fun


def _prior_neg_hess(prior, beta, D):
    if isinstance(prior, GaussianPrior):
        return prior.matvec(np.eye(D), inverse=True)
    return np.diag(prior.neg_hess_diag(beta))


def laplace_map(X, Y, family, prior, tol: float = 1e-8, max_iter: int = 1000,
                newton_steps: int = 5):
    """Full-dimensional MAP: L-BFGS followed by guarded Newton polishing.

    The Newton steps use the dense Hessian and make the result exact (to
    rounding) for quadratic log posteriors.
    """
    family = _family(family)
    X = check_finite(X)
    Y = family.validate_response(Y).ravel()
    N, D = X.shape
    check_oracle(D)
    fun = _neg_log_post(X, Y, family, prior)
    res = minimize(fun, prior.mean_vec, tol=tol, max_iter=max_iter)
    beta, (f, g) = res.argmin, fun(res.argmin)
    for _ in range(newton_steps):
        step = _newton_step(X, Y, family, prior, beta, g)
        cand = beta - step
        fc, gc = fun(cand)
        if not (np.isfinite(fc) and np.max(np.abs(gc)) < np.max(np.abs(g))):
            break
        beta, f, g = cand, fc, gc
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    if gnorm > max(tol, 1e-6):
        raise ConvergenceError(f"dense MAP did not converge: |grad|_inf={gnorm:.3g}")
    return beta


def _newton_step(X, Y, family, prior, beta, g):
    N, D = X.shape
    w = _curvature(family, Y, X @ beta)
    if N < D and isinstance(prior, GaussianPrior):
        return _woodbury_cov_apply(X, w, prior, g)
    P = _prior_neg_hess(prior, beta, D) + X.T @ (w[:, None] * X)
    return sla.solve((P + P.T) / 2, g, assume_a="pos")


def _woodbury_cov_apply(X, w, prior, v):
    """(Sigma_b^{-1} + X^T diag(w) X)^{-1} v using an N x N solve."""
    sw = np.sqrt(w)
    SX = prior.matvec(X.T)  # D x N
    K = np.eye(X.shape[0]) + (sw[:, None] * (X @ SX)) * sw[None, :]
    t = prior.matvec(v)
    inner = sla.solve((K + K.T) / 2, sw * (X @ t), assume_a="pos")
    return t - SX @ (sw * inner)


def exact_laplace_dense(X, Y, family, prior, method: str = "auto",
                        tol: float = 1e-8, oracle_limit=None) -> LaplaceDense:
    """Laplace approximation of the exact posterior.

    ``method="dense"`` inverts Sigma_b^{-1} + X^T diag(-phi'') X directly;
    ``"woodbury"`` (Gaussian priors, best when N < D) uses an N x N system.
    """
    family = _family(family)
    X = check_finite(X)
    N, D = X.shape
    check_oracle(D, oracle_limit)
    if method == "auto":
        method = "woodbury" if (N < D and isinstance(prior, GaussianPrior)) else "dense"
    if method not in ("dense", "woodbury"):
        raise ValueError(f"unknown method {method!r}")
    Y = family.validate_response(Y).ravel()
    mean = laplace_map(X, Y, family, prior, tol=tol)
    w = _curvature(family, Y, X @ mean)
    if method == "dense":
        P = _prior_neg_hess(prior, mean, D) + X.T @ (w[:, None] * X)
        c = sla.cho_factor((P + P.T) / 2, lower=True)
        cov = sla.cho_solve(c, np.eye(D))
    else:
        if not isinstance(prior, GaussianPrior):
            raise ValueError("the Woodbury path needs a Gaussian prior")
        sw = np.sqrt(w)
        SX = prior.matvec(X.T)
        K = np.eye(N) + (sw[:, None] * (X @ SX)) * sw[None, :]
        B = sw[:, None] * SX.T  # N x D
        cov = prior.dense() - B.T @ sla.solve((K + K.T) / 2, B, assume_a="pos")
    return LaplaceDense(mean, (cov + cov.T) / 2)


def diagonal_laplace(X, Y, family, prior, tol: float = 1e-8) -> DiagonalLaplace:
    """MAP plus reciprocal Hessian diagonal: the usual mean-field shortcut.

    The Hessian diagonal is accumulated in O(ND) without forming D x D.
    """
    family = _family(family)
    X = check_finite(X)
    Y = family.validate_response(Y).ravel()
    mean = laplace_map(X, Y, family, prior, tol=tol)
    w = _curvature(family, Y, X @ mean)
    prior_diag = (prior.precision_diag() if isinstance(prior, GaussianPrior)
                  else np.asarray(prior.neg_hess_diag(mean), dtype=float))
    h = prior_diag + np.einsum("n,nd,nd->d", w, X, X)
    return DiagonalLaplace(mean, 1.0 / h)


# --------------------------------------------------------------------------
# queries and prediction


def query_cov(p: FactoredGaussian, i: int, j: int) -> float:
    return p.query_cov(i, j)


def query_var(p: FactoredGaussian, i: int) -> float:
    return p.query_var(i)


def probit_sigmoid(m, v):
    """sigmoid(m / sqrt(1 + pi v / 8))."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("predictive variance must be non-negative")
    return expit(m / np.sqrt(1.0 + math.pi * v / 8.0))


def predict_proba(p: ImplicitPosterior, x_new, point: bool = False):
    """P(y = +1 | x_new) under the probit approximation.

    ``x_new`` may be one D-vector or a matrix of rows.  ``point=True``
    ignores posterior uncertainty and returns sigmoid(x^T mu).
    """
    if not isinstance(p.family, Logistic):
        raise ValueError("predict_proba needs a logistic fit")
    x = check_finite(x_new, "x_new")
    single = x.ndim == 1
    x = np.atleast_2d(x)
    m = x @ p.mean
    v = np.zeros_like(m) if point else np.maximum(p.quad_form(x), 0.0)
    out = probit_sigmoid(m, v)
    return float(out[0]) if single else out
