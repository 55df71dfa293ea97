import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctrcbo import gp
from ctrcbo.gp import KernelSpec, NotPositiveDefinite
from oracles import gp_dense, rbf_dense, standardize

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


class TestKernel:
    def test_sigmoid_logistic_at_zero(self):
        k = KernelSpec.sigmoid(a=1.0, b=0.0, sigma_f2=1.0)
        assert gp.kernel_eval(k, [0.0, 1.0], [1.0, 0.0]) == 0.5

    def test_rbf_zero_distance(self):
        k = KernelSpec.rbf(lengthscale=0.3, sigma_f2=2.0)
        assert gp.kernel_eval(k, [1.0, -2.0], [1.0, -2.0]) == 2.0

    def test_sigmoid_closed_form(self):
        # 1 / (1 + e^-2), evaluated with mpmath at 30 digits
        k = KernelSpec.sigmoid(a=2.0, b=1.0, sigma_f2=1.0)
        assert gp.kernel_eval(k, [0.5, 0.0], [1.0, 3.0]) == pytest.approx(
            0.880797077977882444, abs=1e-15
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gp.kernel_eval(KernelSpec.rbf(), [1.0, 2.0], [1.0])

    def test_non_finite_input(self):
        with pytest.raises(ValueError):
            gp.kernel_eval(KernelSpec.rbf(), [np.nan], [1.0])

    @pytest.mark.parametrize("bad", [dict(sigma_f2=-1.0), dict(lengthscale=0.0), dict(a=np.inf)])
    def test_spec_validation(self, bad):
        with pytest.raises(ValueError):
            KernelSpec(**bad)

    def test_extreme_sigmoid_stays_finite(self):
        k = KernelSpec.sigmoid(a=1e3, b=0.0)
        assert gp.kernel_eval(k, [10.0], [-10.0]) == 0.0
        assert gp.kernel_eval(k, [10.0], [10.0]) == 1.0

    @given(
        arrays(float, 3, elements=finite),
        arrays(float, 3, elements=finite),
        st.sampled_from(["rbf", "sigmoid"]),
    )
    def test_symmetry(self, x, y, kind):
        k = KernelSpec(kind, a=0.7, b=-0.3, lengthscale=(0.5, 1.0, 2.0), sigma_f2=1.3)
        assert gp.kernel_eval(k, x, y) == gp.kernel_eval(k, y, x)

    def test_matrix_matches_pointwise(self, rng):
        A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        for k in (KernelSpec.rbf((0.5, 1.0, 2.0), 1.5), KernelSpec.sigmoid(0.8, 0.2, 2.0)):
            M = gp.kernel_matrix(k, A, B)
            P = np.array([[gp.kernel_eval(k, a, b) for b in B] for a in A])
            np.testing.assert_allclose(M, P, rtol=1e-12, atol=1e-12)


class TestGram:
    def test_single_point_sigmoid(self):
        K, jitter = gp.gram_matrix(KernelSpec.sigmoid(1.0, 0.0, 1.0), [[0.0, 0.0]], 0.0)
        assert jitter == gp.JITTER_START
        assert K[0, 0] == pytest.approx(0.5 + jitter, abs=1e-15)

    def test_duplicate_points(self):
        k = KernelSpec.rbf(1.0, 1.7)
        K, jitter = gp.gram_matrix(k, [[0.3, 0.1], [0.3, 0.1]], 0.1)
        assert K[0, 1] == K[1, 0] == 1.7
        assert K[0, 0] == pytest.approx(1.7 + 0.1 + jitter, abs=1e-15)

    def test_positive_definite_random(self, rng):
        K, _ = gp.gram_matrix(KernelSpec.rbf(0.7, 1.0), rng.normal(size=(5, 3)), 0.0)
        # power iteration on (c I - K) gives c - lambda_min
        c = np.abs(K).sum(axis=1).max() + 1.0
        M = c * np.eye(5) - K
        v = np.ones(5)
        for _ in range(5000):
            v = M @ v
            v /= np.linalg.norm(v)
        lam_min = c - v @ M @ v
        assert lam_min > 0
        assert np.all(K == K.T)

    @given(st.integers(2, 20), st.integers(0, 2**32 - 1))
    def test_rbf_psd_before_jitter(self, n, seed):
        X = np.random.default_rng(seed).normal(size=(n, 4))
        K = gp.kernel_matrix(KernelSpec.rbf(0.8, 1.0), X, X)
        assert np.linalg.eigvalsh(0.5 * (K + K.T)).min() >= -1e-10

    def test_indefinite_sigmoid_raises(self):
        # k(x, y) = 1 / (1 + e^{-(50 x.y - 10)}) is far from PSD on these points
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.7, 0.7]])
        with pytest.raises(NotPositiveDefinite):
            gp.gram_matrix(KernelSpec.sigmoid(50.0, -10.0, 1.0), X * 3, 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gp.gram_matrix(KernelSpec.rbf(), np.empty((0, 2)), 0.0)

    def test_cholesky_reconstructs(self, rng):
        X = rng.normal(size=(8, 2))
        model = gp.fit(X, rng.normal(size=8), KernelSpec.rbf(1.0, 1.0), 0.01, standardize=False)
        K, jitter = gp.gram_matrix(KernelSpec.rbf(1.0, 1.0), X, 0.01)
        assert jitter == model.jitter_used
        err = np.linalg.norm(model.chol @ model.chol.T - K) / np.linalg.norm(K)
        assert err < 1e-8


class TestFitPredict:
    def test_single_point_interpolates(self):
        model = gp.fit([[0.2, 0.4]], [3.0], KernelSpec.rbf(), 0.0, prior_mean=0.0)
        assert gp.predict(model, np.array([0.2, 0.4])).mean == pytest.approx(3.0, abs=1e-8)

    def test_targets_at_prior_mean_give_zero_alpha(self, rng):
        model = gp.fit(rng.normal(size=(4, 2)), np.full(4, 2.5), KernelSpec.rbf(), 0.1, 2.5)
        assert np.all(model.alpha == 0.0)

    def test_noisy_fit_matches_linear_solve(self, rng):
        X, y = rng.uniform(size=(6, 2)), rng.normal(size=6)
        model = gp.fit(X, y, KernelSpec.rbf(1.0, 1.0), 1e-6)
        mean, _, _ = gp_dense(X, y, X, 1.0, 1.0, 1e-6, model.jitter_used)
        for i in range(6):
            assert gp.predict(model, X[i]).mean == pytest.approx(y[i], abs=1e-4)
            assert gp.predict(model, X[i]).mean == pytest.approx(mean[i], abs=1e-8)

    def test_training_point_has_no_variance(self, rng):
        X = rng.normal(size=(5, 2))
        model = gp.fit(X, rng.normal(size=5), KernelSpec.rbf(1.0, 1.0), 0.0)
        assert all(gp.predict(model, x).variance <= 1e-8 for x in X)

    def test_far_point_reverts_to_prior(self, rng):
        X = rng.normal(size=(5, 2))
        model = gp.fit(X, rng.normal(size=5), KernelSpec.rbf(0.5, 1.3), 0.01, prior_mean=0.7)
        p = gp.predict(model, np.array([1e3, -1e3]))
        assert p.mean == pytest.approx(0.7, abs=1e-6)
        assert p.variance == pytest.approx(1.3, abs=1e-6)

    def test_three_point_oracle(self):
        X = np.array([[0.0, 0.1], [0.5, -0.3], [1.2, 0.8]])
        y = np.array([0.4, -1.0, 2.0])
        Xs = np.array([[0.3, 0.3], [2.0, -1.0]])
        model = gp.fit(X, y, KernelSpec.rbf(0.9, 1.4), 0.05, prior_mean=0.2)
        mean, var, _ = gp_dense(X, y, Xs, 0.9, 1.4, 0.05, model.jitter_used, 0.2)
        got_m, got_v = model.predict_many(Xs)
        np.testing.assert_allclose(got_m, mean, atol=1e-8)
        np.testing.assert_allclose(got_v, var, atol=1e-8)

    def test_dimension_mismatch(self):
        model = gp.fit([[0.0, 1.0]], [1.0], KernelSpec.rbf(), 0.0)
        with pytest.raises(ValueError):
            gp.predict(model, np.array([1.0, 2.0, 3.0]))

    def test_empty_and_mismatched_data(self):
        with pytest.raises(ValueError):
            gp.fit(np.empty((0, 2)), [], KernelSpec.rbf())
        with pytest.raises(ValueError):
            gp.fit([[0.0], [1.0]], [1.0], KernelSpec.rbf())

    def test_deterministic(self, rng):
        X, y = rng.normal(size=(7, 3)), rng.normal(size=7)
        a = gp.fit(X, y, KernelSpec.sigmoid(0.3, 0.1, 1.0), 0.1)
        b = gp.fit(X, y, KernelSpec.sigmoid(0.3, 0.1, 1.0), 0.1)
        assert np.array_equal(a.chol, b.chol) and np.array_equal(a.alpha, b.alpha)

    def test_standardization_stored_and_applied(self, rng):
        X = rng.normal(loc=100.0, scale=20.0, size=(6, 2))
        model = gp.fit(X, rng.normal(size=6), KernelSpec.rbf(1.0, 1.0), 0.0)
        np.testing.assert_allclose(model.x_shift, X.mean(axis=0))
        np.testing.assert_allclose(model.transform(X).std(axis=0), 1.0)

    @given(st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_noiseless_interpolation(self, n, seed):
        r = np.random.default_rng(seed)
        X, y = r.uniform(-2, 2, size=(n, 2)), r.normal(size=n)
        model = gp.fit(X, y, KernelSpec.rbf(1.0, 1.0), 0.0)
        mean, _ = model.predict_many(X)
        assert np.max(np.abs(mean - y)) <= 1e-6

    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_variance_never_increases_with_data(self, n, seed):
        r = np.random.default_rng(seed)
        X = r.uniform(-1, 1, size=(n + 1, 2))
        y = r.normal(size=n + 1)
        x_test = r.uniform(-1, 1, size=(1, 2))
        kern = KernelSpec.rbf(0.7, 1.0)
        small = gp.fit(X[:n], y[:n], kern, 0.01, standardize=False)
        big = gp.fit(X, y, kern, 0.01, standardize=False)
        assert big.predict_many(x_test)[1][0] <= small.predict_many(x_test)[1][0] + 1e-8

    def test_sigmoid_variance_uses_sigmoid_prior(self):
        kern = KernelSpec.sigmoid(0.5, 0.2, 1.0)
        model = gp.fit([[0.0, 0.0]], [0.0], kern, 0.0, standardize=False)
        x = np.array([30.0, 30.0])
        # far in the dot-product sense: k(x, x) ~ sigma_f2 and k(x, 0) = sigmoid(b)
        prior = gp.kernel_eval(kern, x, x)
        k0 = gp.kernel_eval(kern, x, [0.0, 0.0])
        expected = prior - k0**2 / (gp.kernel_eval(kern, [0, 0], [0, 0]) + model.jitter_used)
        assert gp.predict(model, x).variance == pytest.approx(expected, abs=1e-9)


class TestLikelihood:
    def test_standard_normal_at_zero(self):
        model = gp.fit([[0.0]], [0.0], KernelSpec.rbf(1.0, 1.0 - gp.JITTER_START), 0.0)
        assert gp.log_marginal_likelihood(model) == pytest.approx(-0.918938533, abs=1e-8)

    def test_standard_normal_at_one(self):
        model = gp.fit([[0.0]], [1.0], KernelSpec.rbf(1.0, 1.0 - gp.JITTER_START), 0.0)
        assert gp.log_marginal_likelihood(model) == pytest.approx(-1.418938533, abs=1e-8)

    def test_four_point_oracle(self, rng):
        X, y = rng.normal(size=(4, 2)), rng.normal(size=4)
        model = gp.fit(X, y, KernelSpec.rbf(1.3, 0.8), 0.02, prior_mean=0.1)
        _, _, lml = gp_dense(X, y, X[:1], 1.3, 0.8, 0.02, model.jitter_used, 0.1)
        assert gp.log_marginal_likelihood(model) == pytest.approx(lml, abs=1e-8)


class TestSelection:
    def test_single_element_grids(self, rng):
        k = KernelSpec.rbf(2.0, 1.0)
        assert gp.select_hyperparameters(rng.normal(size=(5, 2)), rng.normal(size=5), [k], [0.1]) == (k, 0.1)

    def test_duplicate_entries_keep_first(self, rng):
        a = KernelSpec.rbf(1.0, 1.0)
        b = KernelSpec.rbf(1.0, 1.0)
        kern, _ = gp.select_hyperparameters(rng.normal(size=(5, 2)), rng.normal(size=5), [a, b], [0.1])
        assert kern is a

    def test_skips_unfittable_candidates(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.7, 0.7]])
        bad = KernelSpec.sigmoid(500.0, -10.0, 1.0)
        good = KernelSpec.rbf(1.0, 1.0)
        assert gp.select_hyperparameters(X, np.arange(5.0), [bad, good], [0.0]) == (good, 0.0)
        with pytest.raises(NotPositiveDefinite):
            gp.select_hyperparameters(X, np.arange(5.0), [bad], [0.0])

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            gp.select_hyperparameters([[0.0]], [0.0], [], [0.1])

    def test_recovers_generating_lengthscale(self):
        grid = [KernelSpec.rbf(ls, 1.0) for ls in (0.1, 1.0, 10.0)]
        hits = 0
        for seed in range(50):
            r = np.random.default_rng(seed)
            X = r.normal(size=(40, 2))
            mu, sd = standardize(X)
            Z = (X - mu) / sd
            K = rbf_dense(Z, Z, 1.0, 1.0) + 1e-8 * np.eye(40)
            y = np.linalg.cholesky(K) @ r.normal(size=40) + 0.1 * r.normal(size=40)
            kern, _ = gp.select_hyperparameters(X, y, grid, [0.01])
            hits += kern.lengthscale == 1.0
        assert hits >= 45
