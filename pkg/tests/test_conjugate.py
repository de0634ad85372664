import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrglm.conjugate import (conservativeness_check, entropy_loss, exact_posterior_dense,
                             exact_posterior_woodbury, full_residual_spectrum, limit_mean,
                             lr_posterior, mean_error_bound, posterior_query, precision_error,
                             precision_error_dense)
from lrglm.errors import OracleLimitError
from lrglm.linalg import DETERMINISTIC, truncated_svd
from lrglm.models import GaussianPrior
from conftest import low_rank_matrix


def lr_design(X, svd):
    return X @ svd.U @ svd.U.T


def general_prior(rng, D, mean=True):
    return GaussianPrior.diag_plus_low_rank(
        rng.uniform(0.3, 2.0, D), 0.5 * rng.standard_normal((D, 2)),
        mean=rng.standard_normal(D) if mean else None)


class TestExactPosterior:
    def test_no_data(self):
        X = np.zeros((4, 3))
        Y = np.arange(4.0)
        p = GaussianPrior.isotropic(2.0, 3)
        for f in (exact_posterior_dense, exact_posterior_woodbury):
            post = f(X, Y, p, 1.0)
            np.testing.assert_allclose(post.mean, 0, atol=1e-15)
            np.testing.assert_allclose(post.cov, 2 * np.eye(3), atol=1e-15)

    def test_scalar(self):
        # (1 + 1)^{-1} = 1/2; mean = 1/2 * 1 * 2
        for f in (exact_posterior_dense, exact_posterior_woodbury):
            post = f(np.ones((1, 1)), np.array([2.0]), GaussianPrior.isotropic(1.0, 1), 1.0)
            assert post.cov[0, 0] == pytest.approx(0.5, abs=1e-15)
            assert post.mean[0] == pytest.approx(1.0, abs=1e-15)

    def test_block_diagonal(self):
        X = np.eye(3)[:2]
        post = exact_posterior_woodbury(X, np.zeros(2), GaussianPrior.isotropic(1.0, 3), 1.0)
        np.testing.assert_allclose(post.cov, np.diag([0.5, 0.5, 1.0]), atol=1e-15)

    def test_dense_equals_woodbury_small(self):
        r = np.random.default_rng(5)
        X, Y = r.standard_normal((5, 3)), r.standard_normal(5)
        p = GaussianPrior.isotropic(1.5, 3)
        a, b = exact_posterior_dense(X, Y, p, 0.8), exact_posterior_woodbury(X, Y, p, 0.8)
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-10)

    @given(st.integers(0, 2**31), st.integers(1, 50), st.integers(1, 50),
           st.floats(0.1, 10), st.booleans())
    def test_dense_equals_woodbury(self, seed, N, D, tau, structured):
        r = np.random.default_rng(seed)
        X, Y = r.standard_normal((N, D)), r.standard_normal(N)
        p = general_prior(r, D) if structured else GaussianPrior.isotropic(1.0, D)
        a, b = exact_posterior_dense(X, Y, p, tau), exact_posterior_woodbury(X, Y, p, tau)
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-9)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-9)

    def test_mean_formula_zero_prior_mean(self, rng):
        X, Y = rng.standard_normal((8, 4)), rng.standard_normal(8)
        post = exact_posterior_dense(X, Y, GaussianPrior.isotropic(1.0, 4), 2.0)
        np.testing.assert_allclose(post.mean, 2.0 * post.cov @ X.T @ Y, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(post.cov) > 0)

    def test_oracle_limit(self):
        p = GaussianPrior.isotropic(1.0, 30)
        with pytest.raises(OracleLimitError):
            exact_posterior_dense(np.zeros((2, 30)), np.zeros(2), p, 1.0, oracle_limit=10)

    def test_bad_inputs(self):
        p = GaussianPrior.isotropic(1.0, 2)
        with pytest.raises(ValueError):
            exact_posterior_dense(np.zeros((3, 2)), np.zeros(2), p, 1.0)
        with pytest.raises(ValueError):
            exact_posterior_dense(np.zeros((2, 2)), np.zeros(2), p, 0.0)


class TestLowRankPosterior:
    @pytest.mark.parametrize("closed_form", [None, False])
    def test_exact_at_true_rank(self, rng, closed_form):
        X = low_rank_matrix(rng, 30, 20, 4)
        Y = rng.standard_normal(30)
        p = GaussianPrior.isotropic(1.3, 20)
        lr = lr_posterior(truncated_svd(X, 4), Y, p, 0.9, closed_form=closed_form)
        ex = exact_posterior_dense(X, Y, p, 0.9)
        np.testing.assert_allclose(lr.mean, ex.mean, atol=1e-8)
        np.testing.assert_allclose(lr.dense_cov(), ex.cov, atol=1e-8)

    def test_no_data_gives_prior(self):
        p = GaussianPrior.isotropic(3.0, 5)
        lr = lr_posterior(truncated_svd(np.zeros((4, 5)), 2), np.ones(4), p, 1.0)
        np.testing.assert_allclose(lr.mean, 0)
        np.testing.assert_allclose(lr.dense_cov(), 3 * np.eye(5))
        assert posterior_query(lr, 2, 2) == 3.0
        assert posterior_query(lr, 1, 3) == 0.0

    def test_replace_the_design_oracle(self):
        r = np.random.default_rng(0)
        X, Y = r.standard_normal((20, 12)), r.standard_normal(20)
        p = GaussianPrior.isotropic(2.0, 12)
        svd = truncated_svd(X, 4, DETERMINISTIC)
        ex = exact_posterior_dense(lr_design(X, svd), Y, p, 0.5)
        for cf in (True, False):
            lr = lr_posterior(svd, Y, p, 0.5, closed_form=cf)
            np.testing.assert_allclose(lr.mean, ex.mean, atol=1e-9)
            np.testing.assert_allclose(lr.dense_cov(), ex.cov, atol=1e-9)

    @given(st.integers(0, 2**31), st.integers(2, 30), st.integers(2, 30),
           st.floats(0.1, 5), st.data())
    def test_general_prior_replace_the_design(self, seed, N, D, tau, data):
        M = data.draw(st.integers(1, min(N, D)))
        r = np.random.default_rng(seed)
        X, Y = r.standard_normal((N, D)), r.standard_normal(N)
        p = general_prior(r, D)
        svd = truncated_svd(X, M, DETERMINISTIC)
        lr = lr_posterior(svd, Y, p, tau)
        ex = exact_posterior_dense(lr_design(X, svd), Y, p, tau)
        np.testing.assert_allclose(lr.mean, ex.mean, atol=1e-8)
        np.testing.assert_allclose(lr.dense_cov(), ex.cov, atol=1e-8)

    def test_closed_form_rejects_structured_prior(self, rng):
        X = rng.standard_normal((6, 4))
        with pytest.raises(ValueError):
            lr_posterior(truncated_svd(X, 2), np.zeros(6), general_prior(rng, 4), 1.0,
                         closed_form=True)

    def test_queries(self, rng):
        X = low_rank_matrix(rng, 15, 10, 3)
        Y = rng.standard_normal(15)
        p = general_prior(rng, 10)
        lr = lr_posterior(truncated_svd(X, 3), Y, p, 1.0)
        ex = exact_posterior_dense(X, Y, p, 1.0)
        for i in range(10):
            assert lr.query_var(i) > 0
            for j in range(10):
                assert posterior_query(lr, i, j) == pytest.approx(ex.cov[i, j], abs=1e-9)
                assert posterior_query(lr, i, j) == posterior_query(lr, j, i)
        np.testing.assert_allclose(lr.variances(), np.diag(ex.cov), atol=1e-9)
        x = rng.standard_normal((4, 10))
        np.testing.assert_allclose(lr.quad_form(x), np.einsum("ij,jk,ik->i", x, ex.cov, x),
                                   atol=1e-9)

    def test_precision_dense(self, rng):
        X = rng.standard_normal((9, 6))
        svd = truncated_svd(X, 2, DETERMINISTIC)
        lr = lr_posterior(svd, rng.standard_normal(9), general_prior(rng, 6), 1.7)
        np.testing.assert_allclose(lr.precision_dense() @ lr.dense_cov(), np.eye(6), atol=1e-10)


class TestBoundsAndErrors:
    def test_mean_bound_zero_at_rank(self, rng):
        X = low_rank_matrix(rng, 12, 8, 3)
        svd = truncated_svd(X, 3, DETERMINISTIC)
        p = GaussianPrior.isotropic(1.0, 8)
        lr = lr_posterior(svd, rng.standard_normal(12), p, 1.0)
        assert mean_error_bound(svd, rng.standard_normal(12), p, 1.0, lr.mean) < 1e-6

    def test_isotropic_bound_formula(self, rng):
        X, Y = rng.standard_normal((25, 10)), rng.standard_normal(25)
        s2, tau = 1.7, 0.6
        p = GaussianPrior.isotropic(s2, 10)
        svd = truncated_svd(X, 3, DETERMINISTIC)
        lr = lr_posterior(svd, Y, p, tau)
        assert svd.complement_norm(lr.mean) < 1e-12
        lb1 = svd.residual_spectral_norm
        vbar_y = np.linalg.norm(Y - svd.V @ (svd.V.T @ Y))
        expected = lb1 * vbar_y / (1 / (s2 * tau) + svd.residual_min_singular**2)
        assert mean_error_bound(svd, Y, p, tau, lr.mean) == pytest.approx(expected, rel=1e-10)

    @given(st.integers(0, 2**31), st.integers(2, 40), st.integers(2, 40), st.data())
    def test_mean_bound_holds(self, seed, N, D, data):
        M = data.draw(st.integers(1, min(N, D)))
        r = np.random.default_rng(seed)
        X, Y = r.standard_normal((N, D)), r.standard_normal(N)
        tau = float(r.uniform(0.2, 3))
        p = general_prior(r, D) if data.draw(st.booleans()) else GaussianPrior.isotropic(1.5, D)
        svd = truncated_svd(X, M, DETERMINISTIC)
        lr = lr_posterior(svd, Y, p, tau)
        err = np.linalg.norm(lr.mean - exact_posterior_dense(X, Y, p, tau).mean)
        assert mean_error_bound(svd, Y, p, tau, lr.mean) >= err - 1e-9

    def test_precision_error_diag(self):
        svd = truncated_svd(np.diag([3.0, 2.0, 1.0]), 1, DETERMINISTIC)
        assert precision_error(svd, 2.0) == pytest.approx(8.0)

    def test_precision_error_zero_at_rank(self, rng):
        X = low_rank_matrix(rng, 10, 7, 2)
        assert precision_error(truncated_svd(X, 2, DETERMINISTIC), 1.0) < 1e-18

    def test_precision_error_matches_dense(self):
        X = np.random.default_rng(1).standard_normal((10, 8))
        svd = truncated_svd(X, 3, DETERMINISTIC)
        assert precision_error(svd, 0.7) == pytest.approx(precision_error_dense(X, svd, 0.7),
                                                          rel=1e-8)


class TestLimitMean:
    def test_isotropic(self, rng):
        U, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        b = rng.standard_normal(6)
        np.testing.assert_allclose(limit_mean(U, GaussianPrior.isotropic(4.0, 6), b),
                                   U @ U.T @ b, atol=1e-12)

    def test_in_span(self, rng):
        U, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        b = U @ np.array([1.0, -2.0])
        np.testing.assert_allclose(limit_mean(U, GaussianPrior.isotropic(0.7, 5), b), b,
                                   atol=1e-12)

    def test_in_span_invariant_subspace(self, rng):
        # span(U) invariant under a diagonal Sigma when U is coordinate-aligned
        U = np.eye(5)[:, [1, 3]]
        b = U @ np.array([2.0, 0.5])
        p = GaussianPrior.diagonal(rng.uniform(0.5, 2, 5))
        np.testing.assert_allclose(limit_mean(U, p, b), b, atol=1e-12)

    def test_not_projection_for_general_subspace(self, rng):
        # with a non-isotropic prior the limit is an oblique, not orthogonal, projection
        U, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        p = GaussianPrior.diagonal([0.5, 1.0, 2.0, 3.0, 4.0])
        b = rng.standard_normal(5)
        m = limit_mean(U, p, b)
        np.testing.assert_allclose(U.T @ m, U.T @ b, atol=1e-12)
        assert np.linalg.norm(m - U @ U.T @ b) > 1e-3

    def test_minimum_norm_among_feasible(self):
        r = np.random.default_rng(3)
        A = r.standard_normal((3, 3))
        S = A @ A.T + 0.5 * np.eye(3)
        w, Q = np.linalg.eigh(S)
        L = Q @ np.diag(np.sqrt(w - 0.1))
        p = GaussianPrior.diag_plus_low_rank(np.full(3, 0.1), L)
        np.testing.assert_allclose(p.dense(), S, atol=1e-12)
        u = r.standard_normal((3, 1))
        u /= np.linalg.norm(u)
        b = r.standard_normal(3)
        m = limit_mean(u, p, b)
        assert abs(u[:, 0] @ m - u[:, 0] @ b) <= 1e-12
        Sinv = np.linalg.inv(S)
        base = m @ Sinv @ m
        # feasible set: m + (I - uu^T) z
        P = np.eye(3) - u @ u.T
        for z in r.standard_normal((1000, 3)):
            v = m + P @ z
            assert v @ Sinv @ v >= base - 1e-12


class TestEntropyAndConservativeness:
    def test_rank_m_zero(self, rng):
        X = low_rank_matrix(rng, 10, 6, 2)
        svd = truncated_svd(X, 2, DETERMINISTIC)
        loss, bound = entropy_loss(full_residual_spectrum(X, svd), GaussianPrior.isotropic(1, 6), 1)
        assert loss == pytest.approx(0, abs=1e-20) and bound == pytest.approx(0, abs=1e-20)

    def test_single_residual(self):
        loss, bound = entropy_loss([1.0], GaussianPrior.isotropic(1.0, 3), 1.0)
        assert loss == pytest.approx(0.5 * math.log(2), rel=1e-15)
        assert loss == pytest.approx(0.34657359, rel=1e-8)
        assert bound == 0.5

    def test_matches_log_determinants(self, rng):
        X, Y = rng.standard_normal((14, 9)), rng.standard_normal(14)
        p, tau = GaussianPrior.isotropic(1.4, 9), 0.8
        svd = truncated_svd(X, 3, DETERMINISTIC)
        ex = exact_posterior_dense(X, Y, p, tau)
        lr = lr_posterior(svd, Y, p, tau)
        # entropy difference of Gaussians = 1/2 (logdet Sigma~ - logdet Sigma)
        dense = 0.5 * (np.linalg.slogdet(lr.dense_cov())[1] - np.linalg.slogdet(ex.cov)[1])
        loss, bound = entropy_loss(full_residual_spectrum(X, svd), p, tau)
        assert loss == pytest.approx(dense, abs=1e-8)
        assert 0 <= loss <= bound

    def test_monotone_in_rank(self, rng):
        X = rng.standard_normal((20, 12))
        p = GaussianPrior.isotropic(1.0, 12)
        losses = [entropy_loss(full_residual_spectrum(X, truncated_svd(X, M, DETERMINISTIC)), p, 1.0)[0]
                  for M in range(1, 13)]
        assert np.all(np.diff(losses) <= 1e-12)

    def test_requires_isotropic(self, rng):
        with pytest.raises(ValueError):
            entropy_loss([1.0], general_prior(rng, 3), 1.0)

    @given(st.integers(0, 2**31), st.integers(2, 40), st.integers(2, 40), st.data())
    def test_conservative(self, seed, N, D, data):
        M = data.draw(st.integers(1, min(N, D)))
        r = np.random.default_rng(seed)
        X, Y = r.standard_normal((N, D)), r.standard_normal(N)
        p = general_prior(r, D, mean=False)
        lr = lr_posterior(truncated_svd(X, M, DETERMINISTIC), Y, p, 1.0)
        assert conservativeness_check(lr, exact_posterior_dense(X, Y, p, 1.0)) >= -1e-10

    def test_conservative_at_rank_is_zero(self, rng):
        X = low_rank_matrix(rng, 10, 8, 3)
        p = GaussianPrior.isotropic(1.0, 8)
        lr = lr_posterior(truncated_svd(X, 3), np.ones(10), p, 1.0)
        assert abs(conservativeness_check(lr, exact_posterior_dense(X, np.ones(10), p, 1.0))) < 1e-10

    def test_tiny_residual(self, rng):
        D, tau, s2 = 8, 2.0, 1.5
        U, _ = np.linalg.qr(rng.standard_normal((D, D)))
        V, _ = np.linalg.qr(rng.standard_normal((12, D)))
        s = np.concatenate([np.linspace(5, 1, D - 1), [1e-4]])
        X = (V * s) @ U.T
        p = GaussianPrior.isotropic(s2, D)
        svd = truncated_svd(X, D - 1, DETERMINISTIC)
        lr = lr_posterior(svd, np.ones(12), p, tau)
        ex = exact_posterior_dense(X, np.ones(12), p, tau)
        lo = conservativeness_check(lr, ex)
        hi = np.linalg.eigvalsh(lr.dense_cov() - ex.cov)[-1]
        assert lo >= -1e-10
        assert hi <= s2**2 * precision_error(svd, tau) + 1e-12
