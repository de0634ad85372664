"""Dense linear-algebra primitives and the rank-M truncated SVD.

Conventions: for a design ``X`` (N x D) the truncated factorisation is
``X ~= V @ diag(lam) @ U.T`` with ``U`` (D x M) the top right singular
vectors, ``V`` (N x M) the left ones.  The orthogonal complement of ``U`` is
never formed; projections onto it are applied as ``I - U U^T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, aslinearoperator, svds

# below this many rows/cols we just take a dense SVD of the operator
_DENSE_CUTOFF = 64


def check_finite(A, name="X"):
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class SVDConfig:
    """How to compute the truncated SVD.

    ``method="randomized"`` is a randomized range finder with a Gaussian
    test matrix of width ``M + oversample`` and ``power_iters`` subspace
    iterations (re-orthonormalised each pass).
    """

    method: Literal["randomized", "deterministic"] = "randomized"
    oversample: int = 10
    power_iters: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("randomized", "deterministic"):
            raise ValueError(f"unknown svd method {self.method!r}")
        if self.oversample < 0 or self.power_iters < 0:
            raise ValueError("oversample and power_iters must be >= 0")


DETERMINISTIC = SVDConfig(method="deterministic")


@dataclass(frozen=True)
class TruncatedSVD:
    """Rank-M factors of X plus summaries of what was truncated away.

    ``residual_spectral_norm`` is ||X - X U U^T||_2 and
    ``residual_min_singular`` the smallest singular value of X over the
    truncated directions (0 when N < D, when rank(X) <= M, or when it was
    not computed, which only ever loosens bounds that use it).
    """

    U: np.ndarray
    lam: np.ndarray
    V: np.ndarray
    residual_spectral_norm: float
    residual_min_singular: float
    method: str = "deterministic"

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def n_features(self) -> int:
        return self.U.shape[0]

    @property
    def lambda1(self) -> float:
        return float(self.lam[0]) if self.lam.size else 0.0

    def projected_design(self) -> np.ndarray:
        """X U, available without touching X again."""
        return self.V * self.lam

    def project(self, beta):
        """U U^T beta."""
        return self.U @ (self.U.T @ beta)

    def complement_norm(self, beta) -> float:
        """||(I - U U^T) beta||_2 (the norm of the truncated coordinates)."""
        beta = np.asarray(beta, dtype=float)
        return float(np.linalg.norm(beta - self.project(beta)))


def _fix_signs(U, V):
    # flip so that each column of U has its largest-magnitude entry positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def _orth(A):
    return sla.qr(A, mode="economic")[0]


def _randomized_basis(X, M, oversample, power_iters, rng):
    N, D = X.shape
    width = min(M + oversample, min(N, D))
    omega = rng.standard_normal((D, width))
    Q = _orth(X @ omega)
    for _ in range(power_iters):
        Q = _orth(X.T @ Q)
        Q = _orth(X @ Q)
    return Q


def truncated_svd(X, M: int, config: SVDConfig | None = None) -> TruncatedSVD:
    """Top-M singular triplets of ``X`` and the residual spectral norm.

    Both methods finish with a Rayleigh-Ritz step on ``X U`` so that
    ``X U == V diag(lam)`` holds to rounding error for the returned factors;
    downstream closed forms rely on that identity.
    """
    config = config or SVDConfig()
    X = check_finite(X)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    N, D = X.shape
    if not (1 <= M <= min(N, D)):
        raise ValueError(f"rank M={M} must lie in [1, min(N, D)={min(N, D)}]")

    min_sing = 0.0
    if config.method == "deterministic":
        _, s, Vt = np.linalg.svd(X, full_matrices=False)
        U = Vt[:M].T.copy()
        if N >= D and M < D:
            min_sing = float(s[-1])
    else:
        rng = np.random.default_rng(config.seed)
        Q = _randomized_basis(X, M, config.oversample, config.power_iters, rng)
        B = Q.T @ X
        _, _, Wt = np.linalg.svd(B, full_matrices=False)
        U = Wt[:M].T.copy()

    # Rayleigh-Ritz on XU: rotates U within its span, makes XU = V diag(lam) exact
    XU = X @ U
    Vr, lam, Rt = np.linalg.svd(XU, full_matrices=False)
    U = U @ Rt.T
    U, V = _fix_signs(U, Vr)
    lam = np.maximum(lam, 0.0)

    if config.method == "deterministic":
        # exact singular subspace: the residual spectrum is the tail of s
        rsn = float(s[M]) if M < len(s) else 0.0
    else:
        rsn = spectral_norm(_residual_operator(X, U), seed=config.seed)
    return TruncatedSVD(U=U, lam=lam, V=V, residual_spectral_norm=float(rsn),
                        residual_min_singular=min_sing, method=config.method)


def _residual_operator(X, U):
    """X - X U U^T as a matrix-free operator."""
    N, D = X.shape

    def matvec(v):
        v = np.asarray(v, dtype=float).reshape(D, -1)
        out = X @ (v - U @ (U.T @ v))
        return out

    def rmatvec(w):
        w = np.asarray(w, dtype=float).reshape(N, -1)
        z = X.T @ w
        return z - U @ (U.T @ z)

    return LinearOperator((N, D), matvec=matvec, rmatvec=rmatvec,
                          matmat=matvec, rmatmat=rmatvec, dtype=float)


def _dense(A):
    if isinstance(A, np.ndarray):
        return A
    return A @ np.eye(A.shape[1])


def top_singular_values(A, k: int, seed: int = 0) -> np.ndarray:
    """Largest ``k`` singular values of a matrix or LinearOperator, descending."""
    m, n = A.shape
    if k < 1 or k > min(m, n):
        raise ValueError(f"k={k} out of range for shape {A.shape}")
    if min(m, n) <= _DENSE_CUTOFF or k >= min(m, n) - 1:
        s = np.linalg.svd(_dense(A), compute_uv=False)
        return s[:k]
    op = aslinearoperator(A)
    v0 = np.random.default_rng(seed).standard_normal(min(m, n))
    try:
        s = svds(op, k=k, tol=0, v0=v0, return_singular_vectors=False,
                 maxiter=max(2000, 20 * min(m, n)))
    except Exception:  # ARPACK can fail on (numerically) zero operators
        s = np.linalg.svd(_dense(A), compute_uv=False)[:k]
    return np.sort(np.abs(s))[::-1]


def spectral_norm(A, seed: int = 0) -> float:
    """Largest singular value of ``A`` (dense array or LinearOperator)."""
    if isinstance(A, np.ndarray):
        check_finite(A, "A")
        if A.size == 0:
            return 0.0
    return float(top_singular_values(A, 1, seed=seed)[0])


def residual_spectrum(X, svd: TruncatedSVD, k: int, seed: int = 0) -> np.ndarray:
    """Top-k singular values of X - X U U^T (non-increasing)."""
    X = check_finite(X)
    N, D = X.shape
    kmax = min(N, D) - svd.rank
    if not (1 <= k <= kmax):
        raise ValueError(f"k={k} must lie in [1, {kmax}]")
    resid = _residual_operator(X, svd.U)
    # the residual has rank <= min(N, D) - M; the extra zero values are not wanted
    return top_singular_values(resid, k, seed=seed)


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians) between the column spans of A and B."""
    return sla.subspace_angles(A, B)


def sym_sqrt(A, clamp: float = 0.0):
    """Symmetric square root via eigendecomposition; eigenvalues clamped at ``clamp``."""
    w, Q = np.linalg.eigh((A + A.T) / 2)
    w = np.maximum(w, clamp)
    return (Q * np.sqrt(w)) @ Q.T


def cho_solve_spd(A, B):
    """Solve ``A x = B`` for SPD ``A`` via Cholesky."""
    c = sla.cho_factor(A, lower=True)
    return sla.cho_solve(c, B)


def spd_inverse(A):
    """Inverse of an SPD matrix via Cholesky (symmetrised result)."""
    inv = cho_solve_spd(A, np.eye(A.shape[0]))
    return (inv + inv.T) / 2
