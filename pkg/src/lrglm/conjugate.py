"""Conjugate Gaussian linear regression: exact posteriors and the LR-GLM one.

Model: y | X, beta ~ N(X beta, tau^{-1} I), beta ~ N(mu_beta, Sigma_beta).
The low-rank posterior replaces X by X U U^T, which gives a covariance of
the factored form Sigma_beta - Sigma_beta U C U^T Sigma_beta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import check_oracle
from .linalg import TruncatedSVD, check_finite, residual_spectrum, spd_inverse
from .models import GaussianPrior
from .posterior import FactoredGaussian, woodbury_core


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    """Explicit mean and dense covariance (small-D oracle representation)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.cov, self.cov.T, atol=1e-10, rtol=0):
            raise ValueError("covariance is not symmetric")

    @property
    def precision(self):
        return spd_inverse(self.cov)


@dataclass(frozen=True, eq=False)
class LowRankPosterior(FactoredGaussian):
    svd: TruncatedSVD = None
    prior: GaussianPrior = None
    tau: float = 1.0

    def precision_dense(self):
        """Sigma_beta^{-1} + tau U diag(lam^2) U^T, densely (oracle use only)."""
        check_oracle(self.dim)
        P = self.prior.matvec(np.eye(self.dim), inverse=True)
        U, lam = self.svd.U, self.svd.lam
        return P + self.tau * (U * lam**2) @ U.T


def _check_inputs(X, Y, tau):
    X = check_finite(X)
    Y = check_finite(Y, "Y").ravel()
    if X.shape[0] != Y.size:
        raise ValueError("X and Y have different numbers of rows")
    if not tau > 0:
        raise ValueError("tau must be positive")
    return X, Y


def exact_posterior_dense(X, Y, prior: GaussianPrior, tau: float,
                          oracle_limit=None) -> GaussianPosterior:
    """Sigma_N = (Sigma_beta^{-1} + tau X^T X)^{-1} by Cholesky."""
    X, Y = _check_inputs(X, Y, tau)
    D = X.shape[1]
    check_oracle(D, oracle_limit)
    P = prior.matvec(np.eye(D), inverse=True) + tau * X.T @ X
    P = (P + P.T) / 2
    c = sla.cho_factor(P, lower=True)
    cov = sla.cho_solve(c, np.eye(D))
    cov = (cov + cov.T) / 2
    rhs = tau * X.T @ Y + prior.matvec(prior.mean_vec, inverse=True)
    return GaussianPosterior(sla.cho_solve(c, rhs), cov)


def exact_posterior_woodbury(X, Y, prior: GaussianPrior, tau: float,
                             oracle_limit=None) -> GaussianPosterior:
    """Sigma_N = Sigma_b - Sigma_b X^T (I/tau + X Sigma_b X^T)^{-1} X Sigma_b.

    O(D N^2) time; worthwhile when N < D.
    """
    X, Y = _check_inputs(X, Y, tau)
    N, D = X.shape
    check_oracle(D, oracle_limit)
    SX = prior.matvec(X.T)  # D x N
    K = np.eye(N) / tau + X @ SX
    c = sla.cho_factor((K + K.T) / 2, lower=True)
    cov = prior.dense() - SX @ sla.cho_solve(c, SX.T)
    cov = (cov + cov.T) / 2
    mu0 = prior.mean_vec
    r = tau * (Y - X @ mu0)
    # Sigma_N X^T r through the same identity
    t = SX @ r
    mean = mu0 + t - SX @ sla.cho_solve(c, X @ t)
    return GaussianPosterior(mean, cov)


def lr_posterior(svd: TruncatedSVD, Y, prior: GaussianPrior, tau: float,
                 closed_form: bool | None = None) -> LowRankPosterior:
    """Posterior of the model with design X U U^T, in factored form.

    With an isotropic prior the component-wise closed form is used
    (``closed_form=None`` picks it automatically); otherwise the M x M core
    is (diag(tau lam^2)^{-1} + U^T Sigma_beta U)^{-1}, evaluated so that zero
    singular values need no special casing.
    """
    Y = check_finite(Y, "Y").ravel()
    if Y.size != svd.V.shape[0]:
        raise ValueError("Y length does not match the SVD's row count")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if closed_form is None:
        closed_form = prior.is_isotropic
    U, lam, V = svd.U, svd.lam, svd.V
    mu0 = prior.mean_vec
    # residual after the prior mean's fitted values: Y - (X U U^T) mu0
    r = Y - V @ (lam * (U.T @ mu0))
    VtR = V.T @ r
    prec_gain = tau * lam**2

    if closed_form:
        if not prior.is_isotropic:
            raise ValueError("closed form needs an isotropic prior")
        s2 = prior.variance
        core = np.diag(prec_gain / (1.0 + s2 * prec_gain))
        BU = s2 * U
        coef = tau * lam / (1.0 / s2 + prec_gain)
        mean = mu0 + U @ (coef * VtR)
    else:
        BU = prior.matvec(U)
        S = U.T @ BU
        core = woodbury_core(np.diag(prec_gain), (S + S.T) / 2)
        z = U @ (tau * lam * VtR)
        mean = mu0 + prior.matvec(z) - BU @ (core @ (BU.T @ z))
    return LowRankPosterior(mean=mean, base=prior, U=U, core=core, BU=BU,
                            svd=svd, prior=prior, tau=float(tau))


def posterior_query(p: FactoredGaussian, i: int, j: int) -> float:
    return p.query_cov(i, j)


def mean_error_bound(svd: TruncatedSVD, Y, prior: GaussianPrior, tau: float,
                     mu_tilde) -> float:
    """Upper bound on ||mu_tilde - mu_N||_2 for conjugate regression.

    lam_bar_1 (lam_bar_1 ||Ubar^T mu~|| + ||Vbar^T Y||) / (1/||tau Sigma_b|| + lam_bar_{D-M}^2),
    with ||Vbar^T Y|| replaced by ||Y - V V^T Y|| (never smaller).  Assumes
    ``svd`` spans an exact singular subspace (deterministic SVD).
    """
    lb1 = svd.residual_spectral_norm
    if lb1 == 0.0:
        return 0.0
    Y = check_finite(Y, "Y").ravel()
    V = svd.V
    y_out = float(np.linalg.norm(Y - V @ (V.T @ Y)))
    mu_out = svd.complement_norm(mu_tilde)
    denom = 1.0 / (tau * prior.norm()) + svd.residual_min_singular**2
    return lb1 * (lb1 * mu_out + y_out) / denom


def precision_error(svd: TruncatedSVD, tau: float) -> float:
    """||Sigma_N^{-1} - Sigma~_N^{-1}||_2 = tau lam_bar_1^2."""
    return tau * svd.residual_spectral_norm**2


def precision_error_dense(X, svd: TruncatedSVD, tau: float) -> float:
    """Direct spectral norm of tau (X^T X - U U^T X^T X U U^T) (cross-check)."""
    X = check_finite(X)
    check_oracle(X.shape[1])
    G = X.T @ X
    P = svd.U @ svd.U.T
    diff = tau * (G - P @ G @ P)
    return float(np.max(np.abs(np.linalg.eigvalsh((diff + diff.T) / 2))))


def limit_mean(U_star, prior: GaussianPrior, beta_star) -> np.ndarray:
    """Sigma_b U (U^T Sigma_b U)^{-1} U^T beta*: the minimum Sigma_b^{-1}-norm
    vector sharing beta*'s coordinates along U."""
    U_star = check_finite(U_star, "U_star")
    beta_star = check_finite(beta_star, "beta_star").ravel()
    BU = prior.matvec(U_star)
    S = U_star.T @ BU
    c = sla.cho_factor((S + S.T) / 2, lower=True)
    return BU @ sla.cho_solve(c, U_star.T @ beta_star)


def full_residual_spectrum(X, svd: TruncatedSVD) -> np.ndarray:
    """All (up to min(N, D) - M) singular values of X - X U U^T."""
    X = check_finite(X)
    k = min(X.shape) - svd.rank
    if k <= 0:
        return np.zeros(0)
    return residual_spectrum(X, svd, k)


def entropy_loss(residuals, prior: GaussianPrior, tau: float):
    """Entropy gained (nats) by the LR-GLM posterior over the exact one.

    Returns ``(exact, upper_bound)`` = (1/2 sum log(1 + tau s2 lb_i^2),
    tau s2 / 2 sum lb_i^2) for the residual singular values ``lb``.
    """
    if not prior.is_isotropic:
        raise ValueError("entropy loss is only available for isotropic priors")
    lb2 = np.asarray(residuals, dtype=float) ** 2
    k = tau * prior.variance
    return 0.5 * float(np.sum(np.log1p(k * lb2))), 0.5 * k * float(np.sum(lb2))


def conservativeness_check(lr: LowRankPosterior, exact: GaussianPosterior) -> float:
    """Smallest eigenvalue of Sigma~_N - Sigma_N (>= 0 in theory)."""
    diff = lr.dense_cov() - exact.cov
    return float(np.linalg.eigvalsh((diff + diff.T) / 2)[0])
