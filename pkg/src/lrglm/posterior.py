"""Gaussian posteriors with covariance ``B - (B U) C (U^T B)``.

``B`` is a structured base covariance (the prior covariance, or the inverse
negative prior Hessian for non-Gaussian priors), ``U`` is D x M and ``C`` is
a symmetric M x M core.  Entries cost O(M^2); nothing D x D is ever built
unless :meth:`FactoredGaussian.dense_cov` is called explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import check_oracle
from .linalg import sym_sqrt
from .models import GaussianPrior


def woodbury_core(H, S):
    """(H^{-1} + S)^{-1} for PSD ``H`` and SPD ``S``, without inverting ``H``.

    Uses H^{1/2} (I + H^{1/2} S H^{1/2})^{-1} H^{1/2}, which stays well defined
    when ``H`` is singular (directions with no likelihood curvature).
    """
    Hh = sym_sqrt(H, clamp=0.0)
    inner = np.eye(H.shape[0]) + Hh @ S @ Hh
    core = Hh @ np.linalg.solve(inner, Hh)
    return (core + core.T) / 2


@dataclass(frozen=True, eq=False)
class FactoredGaussian:
    mean: np.ndarray
    base: GaussianPrior
    U: np.ndarray
    core: np.ndarray
    BU: np.ndarray  # base covariance applied to U, D x M

    @property
    def dim(self) -> int:
        return self.mean.size

    def query_cov(self, i: int, j: int) -> float:
        if i > j:  # evaluate in a fixed order so the result is exactly symmetric
            i, j = j, i
        return self.base.entry(i, j) - float(self.BU[i] @ self.core @ self.BU[j])

    def query_var(self, i: int) -> float:
        return self.query_cov(i, i)

    def variances(self) -> np.ndarray:
        """All marginal variances in O(D M^2)."""
        return self.base.cov_diag() - np.einsum("ij,ij->i", self.BU @ self.core, self.BU)

    def trace(self) -> float:
        return float(np.sum(self.variances()))

    def cov_matvec(self, v):
        v = np.asarray(v, dtype=float)
        return self.base.matvec(v) - self.BU @ (self.core @ (self.BU.T @ v))

    def quad_form(self, x) -> np.ndarray:
        """x^T Sigma x for a vector or for each row of a matrix."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        Bx = self.base.matvec(x.T)  # D x n
        proj = self.U.T @ Bx  # M x n
        q = np.einsum("ij,ji->i", x, Bx) - np.einsum("in,ij,jn->n", proj, self.core, proj)
        return q

    def dense_cov(self, oracle_limit=None) -> np.ndarray:
        check_oracle(self.dim, oracle_limit, "densified covariance")
        S = self.base.dense() - self.BU @ self.core @ self.BU.T
        return (S + S.T) / 2
