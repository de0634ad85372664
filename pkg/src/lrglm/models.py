"""GLM likelihood families and structured Gaussian priors.

A family is described by its mapping function ``phi(y, a) = log p(y | a)``
where ``a`` is the linear predictor; every family exposes the first three
derivatives in ``a`` in vectorised form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

from .linalg import check_finite, spectral_norm, spd_inverse

# sup_a |d^k/da^k log softplus(a)| for k = 2, 3 (rounded up)
_LOGSOFTPLUS_D2 = 0.16709558
_LOGSOFTPLUS_D3 = 0.06091272
LOGISTIC_D3_SUP = 1.0 / (6.0 * math.sqrt(3.0))


class GlmFamily:
    """Base class; subclasses implement ``_derivative(Y, A, order)``."""

    name = "base"
    log_concave = True

    def validate_response(self, Y):
        return check_finite(Y, "Y")

    def phi_vec(self, Y, A, order: int = 0) -> np.ndarray:
        """``order``-th derivative of phi(Y_n, .) evaluated at A_n, elementwise."""
        if order not in (0, 1, 2, 3):
            raise ValueError(f"order must be 0..3, got {order}")
        Y = self.validate_response(Y)
        A = check_finite(A, "A")
        return self._derivative(Y, A, order)

    def _derivative(self, Y, A, order):  # pragma: no cover - abstract
        raise NotImplementedError

    def loglik(self, Y, A) -> float:
        return float(np.sum(self._derivative(Y, A, 0)))

    def sup_bounds(self, Y=None):
        """Known sup-norms (|phi'|, |phi''|, |phi'''|); ``None`` where unbounded."""
        raise NotImplementedError

    def d2_sup_on_intervals(self, Y, lo, hi) -> float:
        """sup of |phi''(y_n, a)| over a in [lo_n, hi_n], maximised over n."""
        return self.sup_bounds(Y)[1]

    def sample(self, A, rng):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


@dataclass(repr=True)
class Gaussian(GlmFamily):
    """phi(y, a) = -tau (y - a)^2 / 2 (normalising constant dropped)."""

    tau: float = 1.0
    name = "gaussian"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def _derivative(self, Y, A, order):
        r = Y - A
        if order == 0:
            return -0.5 * self.tau * r * r
        if order == 1:
            return self.tau * r
        if order == 2:
            return np.full_like(A, -self.tau)
        return np.zeros_like(A)

    def sup_bounds(self, Y=None):
        return (None, self.tau, 0.0)

    def sample(self, A, rng):
        return A + rng.standard_normal(A.shape) / math.sqrt(self.tau)


class Logistic(GlmFamily):
    """phi(y, a) = -log(1 + exp(-y a)) with y in {-1, +1}."""

    name = "logistic"

    def validate_response(self, Y):
        Y = check_finite(Y, "Y")
        if not np.all(np.abs(Y) == 1):
            raise ValueError("logistic responses must be coded as -1/+1")
        return Y

    def _derivative(self, Y, A, order):
        if order == 0:
            return -np.logaddexp(0.0, -Y * A)
        if order == 1:
            return Y * expit(-Y * A)
        s = expit(A)
        sc = expit(-A)
        if order == 2:
            return -s * sc
        # d/da of -s(1-s) is -s(1-s)(1-2s); independent of y
        return -s * sc * (sc - s)

    def sup_bounds(self, Y=None):
        return (1.0, 0.25, LOGISTIC_D3_SUP)

    def d2_sup_on_intervals(self, Y, lo, hi):
        # |phi''| peaks at a = 0 and decreases in |a|
        nearest = np.where((lo <= 0) & (hi >= 0), 0.0,
                           np.minimum(np.abs(lo), np.abs(hi)))
        return float(np.max(expit(nearest) * expit(-nearest))) if nearest.size else 0.0

    def sample(self, A, rng):
        return np.where(rng.random(A.shape) < expit(A), 1.0, -1.0)


class PoissonSoftplus(GlmFamily):
    """Poisson responses with rate softplus(a) = log(1 + exp(a)).

    phi(y, a) = y log softplus(a) - softplus(a) - log y!
    """

    name = "poisson"

    def validate_response(self, Y):
        Y = check_finite(Y, "Y")
        if np.any(Y < 0) or np.any(Y != np.round(Y)):
            raise ValueError("poisson responses must be non-negative integers")
        return Y

    def _derivative(self, Y, A, order):
        lam = np.logaddexp(0.0, A)
        if order == 0:
            return Y * np.log(lam) - lam - gammaln(Y + 1)
        s = expit(A)
        s1 = s * expit(-A)
        r = s / lam
        if order == 1:
            return Y * r - s
        # derivatives of log softplus: r' = s1/lam - r^2
        d2log = s1 / lam - r * r
        if order == 2:
            return Y * d2log - s1
        s2 = s1 * (1.0 - 2.0 * s)
        d3log = s2 / lam - s1 * r / lam - 2.0 * r * d2log
        return Y * d3log - s2

    def sup_bounds(self, Y=None):
        ymax = float(np.max(Y)) if Y is not None and np.size(Y) else 0.0
        return (max(ymax, 1.0), ymax * _LOGSOFTPLUS_D2 + 0.25,
                ymax * _LOGSOFTPLUS_D3 + LOGISTIC_D3_SUP)

    def sample(self, A, rng):
        return rng.poisson(np.logaddexp(0.0, A)).astype(float)


FAMILIES = {"gaussian": Gaussian, "logistic": Logistic, "poisson": PoissonSoftplus}


def get_family(name: str, tau: float = 1.0) -> GlmFamily:
    if name == "gaussian":
        return Gaussian(tau)
    try:
        return FAMILIES[name]()
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def phi_vec(family: GlmFamily, Y, A, order: int = 0) -> np.ndarray:
    return family.phi_vec(Y, A, order)


# --------------------------------------------------------------------------
# priors


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """N(mean, Sigma) with Sigma isotropic, diagonal, or diagonal + L L^T.

    Build through :meth:`isotropic`, :meth:`diagonal` or
    :meth:`diag_plus_low_rank`; all matvecs are O(D) or O(Dk).
    """

    kind: str
    dim: int
    diag: np.ndarray
    L: np.ndarray | None = None
    mean: np.ndarray | None = None
    _cap: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def isotropic(cls, var: float, dim: int, mean=None):
        if not var > 0:
            raise ValueError("prior variance must be positive")
        return cls("isotropic", dim, np.full(dim, float(var)), mean=_mean(mean, dim))

    @classmethod
    def diagonal(cls, d, mean=None):
        d = check_finite(d, "prior diagonal").ravel()
        if np.any(d <= 0):
            raise ValueError("prior covariance must have positive diagonal entries")
        return cls("diagonal", d.size, d.copy(), mean=_mean(mean, d.size))

    @classmethod
    def diag_plus_low_rank(cls, d, L, mean=None):
        d = check_finite(d, "prior diagonal").ravel()
        L = check_finite(L, "prior factor").reshape(d.size, -1)
        if np.any(d <= 0):
            raise ValueError("prior covariance must have positive diagonal entries")
        # capacitance inverse for Woodbury: (I + L^T D^{-1} L)^{-1}
        cap = spd_inverse(np.eye(L.shape[1]) + (L / d[:, None]).T @ L)
        return cls("diag_plus_low_rank", d.size, d.copy(), L.copy(), _mean(mean, d.size), cap)

    # ---- basic queries
    @property
    def is_isotropic(self):
        return self.kind == "isotropic"

    @property
    def is_diagonal(self):
        return self.kind in ("isotropic", "diagonal")

    @property
    def variance(self) -> float:
        """sigma_beta^2 for isotropic priors."""
        if not self.is_isotropic:
            raise ValueError("variance is only defined for isotropic priors")
        return float(self.diag[0])

    @property
    def mean_vec(self) -> np.ndarray:
        return np.zeros(self.dim) if self.mean is None else self.mean

    @property
    def zero_mean(self) -> bool:
        return self.mean is None or not np.any(self.mean)

    def matvec(self, v, inverse: bool = False):
        """Sigma v or Sigma^{-1} v; ``v`` may be a vector or a D x k block."""
        v = np.asarray(v, dtype=float)
        d = self.diag if v.ndim == 1 else self.diag[:, None]
        if not inverse:
            out = d * v
            if self.L is not None:
                out = out + self.L @ (self.L.T @ v)
            return out
        out = v / d
        if self.L is not None:
            # Woodbury: D^-1 - D^-1 L (I + L^T D^-1 L)^-1 L^T D^-1
            DL = self.L / self.diag[:, None]
            out = out - DL @ (self._cap @ (DL.T @ v))
        return out

    def entry(self, i: int, j: int) -> float:
        val = self.diag[i] if i == j else 0.0
        if self.L is not None:
            val += float(self.L[i] @ self.L[j])
        return float(val)

    def cov_diag(self) -> np.ndarray:
        out = self.diag.copy()
        if self.L is not None:
            out += np.einsum("ij,ij->i", self.L, self.L)
        return out

    def precision_diag(self) -> np.ndarray:
        out = 1.0 / self.diag
        if self.L is not None:
            DL = self.L / self.diag[:, None]
            out -= np.einsum("ij,jk,ik->i", DL, self._cap, DL)
        return out

    def dense(self) -> np.ndarray:
        S = np.diag(self.diag)
        if self.L is not None:
            S = S + self.L @ self.L.T
        return S

    def norm(self) -> float:
        """||Sigma||_2."""
        if self.L is None:
            return float(self.diag.max())
        from scipy.sparse.linalg import LinearOperator
        op = LinearOperator((self.dim, self.dim), matvec=self.matvec, rmatvec=self.matvec,
                            dtype=float)
        return spectral_norm(op)

    def inv_norm(self) -> float:
        """||Sigma^{-1}||_2."""
        if self.L is None:
            return float(1.0 / self.diag.min())
        from scipy.sparse.linalg import LinearOperator

        def mv(v):
            return self.matvec(v, inverse=True)

        op = LinearOperator((self.dim, self.dim), matvec=mv, rmatvec=mv, dtype=float)
        return spectral_norm(op)

    # ---- density
    def log_density(self, beta):
        """-1/2 (b - mu)^T Sigma^{-1} (b - mu) and its gradient."""
        r = np.asarray(beta, dtype=float) - self.mean_vec
        g = -self.matvec(r, inverse=True)
        return 0.5 * float(r @ g), g

    def neg_hess_diag(self, beta=None):
        """Diagonal of -Hessian of log density (only exact for diagonal priors)."""
        return self.precision_diag()

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        z = rng.standard_normal(shape) * np.sqrt(self.diag)
        if self.L is not None:
            k = self.L.shape[1]
            w = rng.standard_normal(shape[:-1] + (k,))
            z = z + w @ self.L.T
        return z + self.mean_vec


def _mean(mean, dim):
    if mean is None:
        return None
    mean = check_finite(mean, "prior mean").ravel()
    if mean.size != dim:
        raise ValueError("prior mean has wrong length")
    return mean.copy()


def prior_matvec(prior: GaussianPrior, v, inverse: bool = False):
    return prior.matvec(check_finite(v, "v"), inverse=inverse)


def log_prior(prior, beta):
    """Log prior density (up to a constant) and gradient."""
    return prior.log_density(check_finite(beta, "beta"))


@dataclass(frozen=True)
class StudentTPrior:
    """Independent Student-t coordinates: the diagonal non-Gaussian prior.

    log p(b) = sum_i -(nu + 1)/2 log(1 + (b_i - loc_i)^2 / (nu scale_i^2)).
    """

    nu: float
    scale: np.ndarray
    loc: np.ndarray

    @classmethod
    def iid(cls, nu, scale, dim, loc=0.0):
        return cls(float(nu), np.full(dim, float(scale)), np.full(dim, float(loc)))

    @property
    def dim(self):
        return self.scale.size

    @property
    def mean_vec(self):
        return self.loc

    def log_density(self, beta):
        r = np.asarray(beta, dtype=float) - self.loc
        q = self.nu * self.scale**2
        val = -0.5 * (self.nu + 1) * np.sum(np.log1p(r * r / q))
        grad = -(self.nu + 1) * r / (q + r * r)
        return float(val), grad

    def neg_hess_diag(self, beta):
        r = np.asarray(beta, dtype=float) - self.loc
        q = self.nu * self.scale**2
        return (self.nu + 1) * (q - r * r) / (q + r * r) ** 2
