"""Computable error bounds for LR-GLM fits and the Gaussian W2 distance.

All bounds scale with lam_bar_1 = ||X - X U U^T||_2 and vanish when the
design is exactly rank M.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import TruncatedSVD, check_finite, sym_sqrt
from .models import Gaussian, GaussianPrior, GlmFamily, Logistic, get_family

_CLAMP = 1e-12


@dataclass
class BoundReport:
    lambda1: float
    lambda_bar1: float
    alpha: float
    c: float
    phi_sup: tuple  # (||phi'(Y, X mu_hat)||_2, sup|phi''|, sup|phi'''|)
    r: float
    map_bound: float
    w2_bound: float
    w2_actual: float | None = None
    sigma_bar_norm: float = 0.0
    prior_relaxed: bool = False

    def to_dict(self):
        d = asdict(self)
        d["phi_sup"] = list(self.phi_sup)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _family(family) -> GlmFamily:
    return get_family(family) if isinstance(family, str) else family


def _check_family(family):
    if not isinstance(family, (Gaussian, Logistic)) and family.name != "poisson":
        raise ValueError(f"no sup-bounds known for family {family!r}")


def _d2_sup(family, svd, X, Y, mu_hat, tight):
    if tight:
        a_full = X @ mu_hat
        a_lr = svd.projected_design() @ (svd.U.T @ mu_hat)
        return family.d2_sup_on_intervals(Y, np.minimum(a_full, a_lr),
                                          np.maximum(a_full, a_lr))
    return family.sup_bounds(Y)[1]


def _map_parts(svd, X, Y, family, prior, mu_hat, tight):
    X = check_finite(X)
    Y = family.validate_response(Y).ravel()
    mu_hat = check_finite(mu_hat, "mu_hat").ravel()
    g = float(np.linalg.norm(family.phi_vec(Y, X @ mu_hat, 1)))
    d2 = _d2_sup(family, svd, X, Y, mu_hat, tight)
    alpha = 1.0 / prior.norm()
    lb1, l1 = svd.residual_spectral_norm, svd.lambda1
    out = svd.complement_norm(mu_hat)
    bound = lb1 * (g + l1 * out * d2) / alpha if lb1 > 0 else 0.0
    return bound, g, d2, alpha


def map_error_bound(svd: TruncatedSVD, X, Y, family, prior: GaussianPrior, mu_hat,
                    tight: bool = False) -> float:
    """Upper bound on ||mu_hat - mu_bar||_2 between the LR-GLM and exact MAPs.

    lam_bar_1 (||phi'(Y, X mu_hat)||_2 + lam_1 ||(I - UU^T) mu_hat|| sup|phi''|) / alpha
    with alpha = 1 / ||Sigma_b||_2.  The sup of |phi''| is the global family
    sup unless ``tight=True`` (logistic only), which takes the sup over the
    interval between x_n^T U U^T mu_hat and x_n^T mu_hat for every n.
    """
    family = _family(family)
    _check_family(family)
    if tight and not isinstance(family, Logistic):
        raise ValueError("tight interval sup is only available for the logistic family")
    return _map_parts(svd, X, Y, family, prior, mu_hat, tight)[0]


def w2_bound(svd: TruncatedSVD, X, Y, family, prior: GaussianPrior, lr_fit,
             dense_fit=None) -> BoundReport:
    """2-Wasserstein bound between the LR-Laplace and exact Laplace Gaussians.

    sqrt(2) lb1 ||Sigma_bar|| { c [||Sigma_b^{-1}|| + (l1 + lb1)^2 s2]
                                + (l1^2 r + (lb1 + 2 l1) s2) sqrt(tr Sigma_hat) }

    with c the MAP bound divided by lb1 and r = m ||phi'''|| + l1 c ||phi'''||,
    where m = max(||U^T mu_hat||_inf, ||(I - UU^T) mu_hat||_2).  Without a
    dense fit, ||Sigma_bar|| is replaced by ||Sigma_b|| and the report is
    flagged ``prior_relaxed``.
    """
    family = _family(family)
    _check_family(family)
    Y = family.validate_response(Y).ravel()
    mu_hat = lr_fit.mean
    map_b, g, _, alpha = _map_parts(svd, X, Y, family, prior, mu_hat, tight=False)
    _, s2, s3 = family.sup_bounds(Y)
    lb1, l1 = svd.residual_spectral_norm, svd.lambda1
    c = map_b / lb1 if lb1 > 0 else 0.0
    m = max(float(np.max(np.abs(svd.U.T @ mu_hat))), svd.complement_norm(mu_hat))
    r = m * s3 + l1 * c * s3
    if dense_fit is not None:
        sbar = float(np.linalg.eigvalsh(dense_fit.cov)[-1])
        relaxed = False
    else:
        sbar = prior.norm()
        relaxed = True
    if lb1 > 0:
        tr = max(lr_fit.trace(), 0.0)
        w2b = math.sqrt(2.0) * lb1 * sbar * (
            c * (prior.inv_norm() + (l1 + lb1) ** 2 * s2)
            + (l1 * l1 * r + (lb1 + 2 * l1) * s2) * math.sqrt(tr))
    else:
        w2b = 0.0
    w2a = None
    if dense_fit is not None:
        w2a = w2_gaussians((lr_fit.mean, lr_fit.dense_cov()), dense_fit)
    return BoundReport(lambda1=l1, lambda_bar1=lb1, alpha=alpha, c=c,
                       phi_sup=(g, s2, s3), r=r, map_bound=map_b, w2_bound=w2b,
                       w2_actual=w2a, sigma_bar_norm=sbar, prior_relaxed=relaxed)


def _unpack(p):
    if isinstance(p, tuple):
        mean, cov = p
    elif hasattr(p, "cov"):
        mean, cov = p.mean, p.cov
    else:
        mean, cov = p.mean, p.dense_cov()
    mean = check_finite(mean, "mean").ravel()
    cov = check_finite(cov, "cov")
    cov = (cov + cov.T) / 2
    if cov.shape != (mean.size, mean.size):
        raise ValueError("mean and covariance shapes disagree")
    lo = np.linalg.eigvalsh(cov)[0]
    if lo < -1e-8 * max(1.0, float(np.abs(cov).max())):
        raise ValueError("covariance is not positive semi-definite")
    return mean, cov


def w2_gaussians(p1, p2) -> float:
    """Closed-form (Bures) 2-Wasserstein distance between two Gaussians.

    Each argument is a ``(mean, cov)`` pair or an object with ``mean`` and
    ``cov`` (or ``dense_cov()``).
    """
    m1, S1 = _unpack(p1)
    m2, S2 = _unpack(p2)
    if m1.size != m2.size:
        raise ValueError("dimension mismatch")
    r2 = sym_sqrt(S2, clamp=_CLAMP)
    cross = sym_sqrt(r2 @ S1 @ r2, clamp=_CLAMP)
    val = float(np.sum((m1 - m2) ** 2) + np.trace(S1) + np.trace(S2) - 2 * np.trace(cross))
    return math.sqrt(max(val, 0.0))


def functional_gaps(p1, p2):
    """Per-coordinate |mean difference| and |std difference|."""
    m1, S1 = _unpack(p1)
    m2, S2 = _unpack(p2)
    sd1 = np.sqrt(np.maximum(np.diag(S1), 0.0))
    sd2 = np.sqrt(np.maximum(np.diag(S2), 0.0))
    return np.abs(m1 - m2), np.abs(sd1 - sd2)
