"""Metropolis-Hastings on the LR-GLM posterior.

Each log-density evaluation needs only (XU)(U^T beta) and the prior, i.e.
O(NM + DM) work; the design X itself is not touched after the SVD.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .linalg import SVDConfig, TruncatedSVD, check_finite, truncated_svd
from .models import GaussianPrior, GlmFamily, get_family


@dataclass(frozen=True)
class ProposalConfig:
    """Proposal kernel.

    ``random_walk``: beta' = beta + step_scale * z, z ~ N(0, I).
    ``pcn``: beta' = mu + sqrt(1 - rho^2) (beta - mu) + rho xi, xi ~ N(0, Sigma_b);
    only for Gaussian priors, and it leaves the prior invariant.
    With ``adapt=True`` the step (or rho) is tuned during burn-in toward
    ``target_accept`` and then frozen.
    """

    kind: str = "random_walk"
    step_scale: float = 0.1
    rho: float = 0.5
    adapt: bool = True
    target_accept: float = 0.234

    def __post_init__(self):
        if self.kind not in ("random_walk", "pcn"):
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class Chain:
    samples: np.ndarray  # retained draws, one per row
    log_posts: np.ndarray
    acceptance_rate: float  # accepted / post-burn-in iterations
    seed: int
    n_accepted: int = 0
    burn_in: int = 0
    step: float = float("nan")  # final step_scale (or rho for pCN)

    @property
    def dim(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class ChainSummary:
    mean: np.ndarray
    var: np.ndarray
    ess: np.ndarray
    mcse: np.ndarray


def _family(family) -> GlmFamily:
    return get_family(family) if isinstance(family, str) else family


def lr_log_posterior(beta, XU, U, Y, family, prior):
    """sum_n phi(y_n, x_n^T U U^T beta) + log p(beta), and its gradient."""
    family = _family(family)
    beta = np.asarray(beta, dtype=float)
    a = XU @ (U.T @ beta)
    lp, glp = prior.log_density(beta)
    val = family.loglik(Y, a) + lp
    grad = U @ (XU.T @ family._derivative(Y, a, 1)) + glp
    return val, grad


def run_mh(X, Y, family, prior, M: int | None = None,
           proposal: ProposalConfig | None = None, T: int = 10000,
           burn_in: int = 1000, seed: int = 0, svd: TruncatedSVD | None = None,
           svd_config: SVDConfig | None = None, init=None, thin: int = 1) -> Chain:
    """Run T iterations of MH (the first ``burn_in`` discarded).

    Acceptance uses min(1, exp(L' - L)) on log densities.  ``X`` may be
    ``None`` when ``svd`` is supplied.
    """
    if not (isinstance(T, (int, np.integer)) and T > burn_in >= 0):
        raise ValueError("need T > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    proposal = proposal or ProposalConfig()
    family = _family(family)
    if svd is None:
        if X is None or M is None:
            raise ValueError("provide either svd or both X and M")
        svd = truncated_svd(X, M, svd_config or SVDConfig(seed=seed))
    Y = family.validate_response(Y).ravel()
    U = svd.U
    XU = svd.projected_design()
    D = svd.n_features
    pcn = proposal.kind == "pcn"
    if pcn and not isinstance(prior, GaussianPrior):
        raise ValueError("pCN needs a Gaussian prior")

    def loglik(beta):
        return family.loglik(Y, XU @ (U.T @ beta))

    def logpost(beta):
        return loglik(beta) + prior.log_density(beta)[0]

    rng = np.random.default_rng(seed)
    beta = prior.mean_vec.copy() if init is None else check_finite(init, "init").ravel().copy()
    if beta.size != D:
        raise ValueError("init has the wrong length")
    mu0 = prior.mean_vec
    cur_ll = loglik(beta)
    cur_lp = cur_ll + prior.log_density(beta)[0]
    if not np.isfinite(cur_lp):
        raise ValueError("log posterior is not finite at the initial point")

    log_step = math.log(proposal.step_scale if not pcn else proposal.rho / (1 - proposal.rho))
    n_keep = (T - burn_in + thin - 1) // thin
    samples = np.empty((n_keep, D))
    log_posts = np.empty(n_keep)
    accepted = 0
    k = 0
    for t in range(T):
        if pcn:
            rho = 1.0 / (1.0 + math.exp(-log_step))
            xi = prior.sample(rng) - mu0
            prop = mu0 + math.sqrt(1.0 - rho * rho) * (beta - mu0) + rho * xi
            prop_ll = loglik(prop)
            log_ratio = prop_ll - cur_ll
        else:
            prop = beta + math.exp(log_step) * rng.standard_normal(D)
            prop_lp = logpost(prop)
            log_ratio = prop_lp - cur_lp
        u = rng.random()
        if np.isfinite(log_ratio):
            acc = log_ratio >= 0 or u < math.exp(log_ratio)
        else:
            acc = False
        if acc:
            beta = prop
            if pcn:
                cur_ll = prop_ll
                cur_lp = prop_ll + prior.log_density(prop)[0]
            else:
                cur_lp = prop_lp
        if t < burn_in:
            if proposal.adapt:
                # Robbins-Monro on the log step toward the target rate
                p_acc = min(1.0, math.exp(min(0.0, log_ratio))) if np.isfinite(log_ratio) else 0.0
                log_step += (p_acc - proposal.target_accept) / (t + 1) ** 0.6
        else:
            accepted += acc
            if (t - burn_in) % thin == 0:
                samples[k] = beta
                log_posts[k] = cur_lp
                k += 1
    n_post = T - burn_in
    step = (1.0 / (1.0 + math.exp(-log_step))) if pcn else math.exp(log_step)
    return Chain(samples=samples, log_posts=log_posts,
                 acceptance_rate=accepted / n_post, seed=seed, n_accepted=accepted,
                 burn_in=burn_in, step=step)


def batch_means_ess(x) -> np.ndarray:
    """Effective sample size per column by batch means with floor(sqrt(T)) batches."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if T < 100:
        raise ValueError("chain too short for a batch-means summary (need >= 100)")
    b = int(math.isqrt(T))
    m = T // b
    var = x.var(axis=0, ddof=1)
    bm = x[: b * m].reshape(b, m, -1).mean(axis=1)
    var_b = m * bm.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ess = np.where(var_b > 0, T * var / var_b, float(T))
    ess = np.where(var == 0, float(T), ess)
    return np.clip(ess, np.finfo(float).tiny, float(T))


def chain_summary(c) -> ChainSummary:
    """Per-coordinate mean, variance, ESS and Monte-Carlo standard error."""
    x = c.samples if isinstance(c, Chain) else np.asarray(c, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    ess = batch_means_ess(x)
    mean = x.mean(axis=0)
    var = x.var(axis=0, ddof=1)
    return ChainSummary(mean, var, ess, np.sqrt(var / ess))


def write_chain_csv(c: Chain, path) -> None:
    """One row per retained draw: beta_0..beta_{D-1}, log_post."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"beta_{i}" for i in range(c.dim)] + ["log_post"])
        for row, lp in zip(c.samples, c.log_posts):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lp))])
