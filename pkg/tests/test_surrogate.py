"""Surrogate fitting, incremental updates and predictive queries.

The oracle used throughout is an independent dense reimplementation based
on explicit matrix inverses, built from per-entry kernel evaluations.
"""

import math

import numpy as np
import pytest

from bayopt.errors import InsufficientData, NotPositiveDefinite
from bayopt.kernels import kernel_eval, parse_kernel
from bayopt.means import feature_matrix, parse_mean
from bayopt.surrogate import (
    GAUSSIAN_FIXED,
    GAUSSIAN_NIG,
    STUDENT_T_JEFFREYS,
    Dataset,
    NIGPrior,
    fit,
    predict,
    sample_marginal,
    update,
)


def kernel(expr="kSEISO", theta=(0.4,), dim=2):
    return parse_kernel(expr).bind(theta, dim)


def dense_oracle(kind, kspec, mspec, X, y, sigma_n2, q,
                 prior=None, sigma_s2=1.0):
    """From-scratch prediction via explicit inverses and double loops."""
    n = X.shape[0]
    K = np.array([[kernel_eval(kspec, X[i], X[j]) for j in range(n)] for i in range(n)])
    K += sigma_n2 * np.eye(n)
    Kinv = np.linalg.inv(K)
    Phi = feature_matrix(mspec, X)
    m = Phi.shape[0]
    k = np.array([kernel_eval(kspec, X[i], q) for i in range(n)])
    kqq = kernel_eval(kspec, q, q)
    phi_q = feature_matrix(mspec, np.asarray(q).reshape(1, -1))[:, 0]

    A = Phi @ Kinv @ Phi.T
    if kind == GAUSSIAN_NIG:
        Winv = np.linalg.inv(prior.W)
        M = Winv + A
        Wn = np.linalg.inv(M)
        w = Wn @ (Winv @ prior.w0 + Phi @ Kinv @ y)
        alpha_n = prior.alpha + n / 2.0
        beta_n = prior.beta + 0.5 * (y @ Kinv @ y + prior.w0 @ Winv @ prior.w0
                                     - w @ M @ w)
        sigma2 = beta_n / (alpha_n - 1.0)
        dof = 2.0 * alpha_n
        mid = Wn
    else:
        if m:
            Ainv = np.linalg.inv(A)
            w = Ainv @ Phi @ Kinv @ y
            mid = Ainv
        else:
            w = np.zeros(0)
            mid = np.zeros((0, 0))
        if kind == STUDENT_T_JEFFREYS:
            resid = y - Phi.T @ w
            sigma2 = (resid @ Kinv @ resid) / (n - m)
            dof = float(n - m)
        else:
            sigma2 = sigma_s2
            dof = math.inf
    resid = y - Phi.T @ w if m else y
    mean = (phi_q @ w if m else 0.0) + k @ Kinv @ resid
    r = phi_q - Phi @ Kinv @ k
    var = sigma2 * (kqq + sigma_n2 - k @ Kinv @ k + (r @ mid @ r if m else 0.0))
    return mean, var, dof


class TestFit:
    def test_single_point_interpolates(self):
        data = Dataset(np.array([[0.3, 0.7]]), np.array([2.5]))
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mZero"), data, 0.0)
        assert predict(state, [0.3, 0.7]).mean == pytest.approx(2.5, abs=1e-9)

    def test_pure_linear_target_has_zero_residual(self):
        rng = np.random.default_rng(0)
        X = rng.random((5, 1))
        y = 2.0 + 3.0 * X[:, 0]
        data = Dataset(X, y)
        state = fit(STUDENT_T_JEFFREYS, kernel(dim=1), parse_mean("mLinearConst"),
                    data, 1e-8)
        resid = y - state.Phi.T @ state.w_hat
        assert np.linalg.norm(resid) <= 1e-6
        assert state.sigma2_hat <= 1e-10

    def test_jeffreys_needs_more_points_than_features(self):
        rng = np.random.default_rng(1)
        data = Dataset(rng.random((3, 2)), rng.random(3))
        with pytest.raises(InsufficientData):
            fit(STUDENT_T_JEFFREYS, kernel(), parse_mean("mLinearConst"), data, 1e-6)

    def test_jeffreys_dof_is_n_minus_m(self):
        rng = np.random.default_rng(2)
        data = Dataset(rng.random((9, 2)), rng.random(9))
        state = fit(STUDENT_T_JEFFREYS, kernel(), parse_mean("mLinearConst"), data, 1e-6)
        assert state.dof == 9 - 3

    def test_nig_requires_prior(self):
        rng = np.random.default_rng(3)
        data = Dataset(rng.random((5, 2)), rng.random(5))
        with pytest.raises(Exception):
            fit(GAUSSIAN_NIG, kernel(), parse_mean("mConst"), data, 1e-6)

    def test_precomputed_residual_identity(self):
        # K @ Kinv_y_resid must reproduce y - Phi' w_hat.
        rng = np.random.default_rng(4)
        X = rng.random((12, 2))
        y = rng.standard_normal(12)
        data = Dataset(X, y)
        state = fit(STUDENT_T_JEFFREYS, kernel(), parse_mean("mConst"), data, 1e-6)
        K = state.factor.L @ state.factor.L.T
        lhs = K @ state.Kinv_y_resid
        rhs = y - state.Phi.T @ state.w_hat
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)


class TestPredict:
    def test_noiseless_interpolation(self):
        rng = np.random.default_rng(5)
        X = rng.random((8, 2))
        y = np.sin(3 * X[:, 0]) + X[:, 1]
        for kind in (GAUSSIAN_FIXED, STUDENT_T_JEFFREYS):
            state = fit(kind, kernel("kMaternISO5", (0.4,)), parse_mean("mConst"),
                        Dataset(X, y), 0.0)
            for i in range(8):
                pred = predict(state, X[i])
                assert pred.mean == pytest.approx(y[i], abs=1e-6)
                assert pred.variance <= 1e-8

    def test_prior_reversion_far_from_data(self):
        rng = np.random.default_rng(6)
        X = rng.random((6, 2)) * 0.1
        y = rng.standard_normal(6)
        sigma_n2 = 0.01
        state = fit(STUDENT_T_JEFFREYS, kernel(theta=(0.05,)), parse_mean("mZero"),
                    Dataset(X, y), sigma_n2)
        pred = predict(state, [0.95, 0.95])
        assert pred.mean == pytest.approx(0.0, abs=1e-6)
        assert pred.variance == pytest.approx(state.sigma2_hat * (1 + sigma_n2), rel=1e-6)

    @pytest.mark.parametrize("kind", [GAUSSIAN_FIXED, GAUSSIAN_NIG, STUDENT_T_JEFFREYS])
    def test_matches_dense_oracle(self, kind):
        rng = np.random.default_rng(7)
        X = rng.random((15, 2))
        y = np.cos(4 * X[:, 0]) * X[:, 1] + 0.1 * rng.standard_normal(15)
        kspec = kernel("kSum(kMaternISO5,kConst)", (0.3, 0.2))
        mspec = parse_mean("mLinearConst")
        prior = None
        if kind == GAUSSIAN_NIG:
            prior = NIGPrior(np.zeros(3), 2.0 * np.eye(3), 2.0, 1.5)
        state = fit(kind, kspec, mspec, Dataset(X, y), 1e-4, prior=prior, sigma_s2=0.8)
        for _ in range(20):
            q = rng.random(2)
            pred = predict(state, q)
            mean, var, dof = dense_oracle(kind, kspec, mspec, X, y, 1e-4, q,
                                          prior=prior, sigma_s2=0.8)
            assert pred.mean == pytest.approx(mean, abs=1e-8)
            assert pred.variance == pytest.approx(var, abs=1e-8)
            assert pred.dof == dof or (math.isinf(pred.dof) and math.isinf(dof))

    def test_posterior_contraction(self):
        rng = np.random.default_rng(8)
        X = rng.random((6, 2))
        y = rng.standard_normal(6)
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mConst"),
                    Dataset(X, y), 1e-4)
        q = np.array([0.42, 0.58])
        before = predict(state, q).variance
        state2 = update(state, q, 0.0)
        after = predict(state2, q).variance
        assert after < before


class TestUpdate:
    def test_chain_matches_batch_refit(self):
        rng = np.random.default_rng(9)
        X = rng.random((30, 2))
        y = np.sin(5 * X[:, 0]) + np.cos(3 * X[:, 1])
        kspec = kernel("kMaternISO5", (0.35,))
        mspec = parse_mean("mConst")
        state = fit(STUDENT_T_JEFFREYS, kspec, mspec, Dataset(X[:5], y[:5]), 1e-6)
        for i in range(5, 30):
            state = update(state, X[i], y[i])
        batch = fit(STUDENT_T_JEFFREYS, kspec, mspec, Dataset(X, y), 1e-6)
        probes = rng.random((10, 2))
        for q in probes:
            a, b = predict(state, q), predict(batch, q)
            assert a.mean == pytest.approx(b.mean, rel=1e-6, abs=1e-9)
            assert a.variance == pytest.approx(b.variance, rel=1e-6, abs=1e-12)

    def test_incumbent_tracks_improvement(self):
        data = Dataset(np.array([[0.2, 0.2]]), np.array([1.0]))
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mZero"), data, 1e-6)
        state = update(state, [0.8, 0.8], -2.0)
        x_best, y_best = state.data.incumbent
        assert y_best == -2.0
        np.testing.assert_allclose(x_best, [0.8, 0.8])

    def test_duplicate_with_zero_nugget_raises(self):
        data = Dataset(np.array([[0.5, 0.5]]), np.array([1.0]))
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mZero"), data, 0.0)
        with pytest.raises(NotPositiveDefinite):
            update(state, [0.5, 0.5], 1.0)

    def test_duplicate_with_small_nugget_survives_via_retry(self):
        data = Dataset(np.array([[0.5, 0.5]]), np.array([1.0]))
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mZero"), data, 1e-13)
        state2 = update(state, [0.5, 0.5], 1.0)
        assert state2.data.n == 2


class TestConcurrency:
    def test_concurrent_predictions_match_sequential(self):
        # States are immutable; parallel read-only queries must agree with
        # the sequential answers exactly.
        from concurrent.futures import ThreadPoolExecutor

        rng = np.random.default_rng(14)
        X = rng.random((20, 2))
        y = rng.standard_normal(20)
        state = fit(STUDENT_T_JEFFREYS, kernel(), parse_mean("mConst"),
                    Dataset(X, y), 1e-5)
        probes = rng.random((64, 2))
        sequential = [predict(state, q) for q in probes]
        with ThreadPoolExecutor(max_workers=8) as pool:
            parallel = list(pool.map(lambda q: predict(state, q), probes))
        for a, b in zip(sequential, parallel):
            assert a.mean == b.mean and a.variance == b.variance


class TestDegenerateNIGLimit:
    def test_flat_prior_matches_jeffreys(self):
        # With two trend features the flat-prior posterior-mean variance
        # estimate coincides with the Jeffreys divisor, so predictions match.
        rng = np.random.default_rng(10)
        for trial in range(5):
            X = rng.random((14, 1))
            y = rng.standard_normal(14) + 2.0 * X[:, 0]
            kspec = kernel(dim=1, theta=(0.45,))
            mspec = parse_mean("mLinearConst")
            data = Dataset(X, y)
            jeff = fit(STUDENT_T_JEFFREYS, kspec, mspec, data, 1e-5)
            nig = fit(GAUSSIAN_NIG, kspec, mspec, data, 1e-5,
                      prior=NIGPrior.flat(2))
            for _ in range(5):
                q = rng.random(1)
                a, b = predict(jeff, q), predict(nig, q)
                assert a.mean == pytest.approx(b.mean, abs=1e-4)
                assert a.variance == pytest.approx(b.variance, abs=1e-4, rel=1e-4)


class TestSampleMarginal:
    def test_degenerate_marginal_returns_mean(self):
        X = np.array([[0.5, 0.5]])
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mZero"),
                    Dataset(X, np.array([1.5])), 0.0)
        rng = np.random.default_rng(0)
        for _ in range(10):
            draw = sample_marginal(state, X[0], rng)
            assert abs(draw - 1.5) <= 1e-5

    def test_monte_carlo_mean(self):
        rng_data = np.random.default_rng(11)
        X = rng_data.random((10, 2))
        y = rng_data.standard_normal(10)
        state = fit(STUDENT_T_JEFFREYS, kernel(), parse_mean("mConst"),
                    Dataset(X, y), 1e-4)
        q = np.array([0.3, 0.9])
        pred = predict(state, q)
        rng = np.random.default_rng(12)
        draws = np.array([sample_marginal(state, q, rng) for _ in range(100_000)])
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - pred.mean) <= 3 * se

    def test_fixed_seed_reproducible(self):
        rng_data = np.random.default_rng(13)
        X = rng_data.random((5, 2))
        state = fit(GAUSSIAN_FIXED, kernel(), parse_mean("mConst"),
                    Dataset(X, rng_data.standard_normal(5)), 1e-4)
        a = sample_marginal(state, [0.1, 0.1], np.random.default_rng(42))
        b = sample_marginal(state, [0.1, 0.1], np.random.default_rng(42))
        assert a == b
