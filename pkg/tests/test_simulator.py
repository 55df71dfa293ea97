import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctrcbo.gridscan import GridScanCertificate, minkowski_front, platform_front, scan
from ctrcbo.simulator import (
    CONTEXT_MEAN,
    CohortSpec,
    ContextProcess,
    Environment,
    aggregate,
    benchmark_env_3cohort,
    causal_seed_centers,
    sample_context,
    true_response,
    true_response_many,
)


def cohort(**kw):
    base = dict(id="c", weight=1.0, saturation=2.0, rate=1.5, impression_gain=3.0,
                score_direction=[1.0, 1.0, 0.0], impression_direction=[1.0, 1.0, 1.0],
                context_sensitivity=[0.1, 0.3])
    base.update(kw)
    return CohortSpec(**base)


class TestContext:
    def test_weekly_zero_crossings(self):
        proc = ContextProcess(0)
        for m in range(1, 30):
            assert abs(proc.sample(7 * m)[0]) <= 1e-12

    def test_zero_shock_keeps_multiplier_at_one(self):
        proc = ContextProcess(3, shock_scale=0.0)
        assert all(proc.sample(t)[1] == 1.0 for t in range(1, 100))

    def test_replay(self):
        a, b = ContextProcess(11), ContextProcess(11)
        ta = [a.sample(t) for t in range(1, 60)]
        tb = [sample_context(t, b) for t in range(1, 60)]
        assert np.array_equal(ta, tb)

    def test_random_access_matches_sequential(self):
        a, b = ContextProcess(5), ContextProcess(5)
        late = b.sample(40)
        seq = [a.sample(t) for t in range(1, 41)]
        assert np.array_equal(seq[-1], late)

    def test_step_zero_rejected(self):
        with pytest.raises(ValueError):
            ContextProcess(0).sample(0)


class TestTrueResponse:
    def test_zero_policy(self):
        assert tuple(true_response(cohort(), np.zeros(3), [0.4, 1.2])) == (0.0, 0.0)

    def test_saturation_limit(self):
        c = cohort(rate=50.0)
        z = np.array([0.5, 1.1])
        factor = 1 + 0.1 * 0.5 + 0.3 * 0.1
        assert true_response(c, np.ones(3), z).score_delta == pytest.approx(2.0 * factor, rel=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_symbolic_reevaluation(self, seed):
        r = np.random.default_rng(seed)
        u, v, cs = r.uniform(0.1, 1, 3), r.uniform(0.1, 1, 3), r.normal(0, 0.2, 2)
        s, rate, m = r.uniform(-2, 3), r.uniform(0.1, 4), r.uniform(0, 5)
        c = cohort(saturation=s, rate=rate, impression_gain=m, score_direction=u,
                   impression_direction=v, context_sensitivity=cs)
        theta, z = r.uniform(0, 1, 3), np.array([r.uniform(-1, 1), r.uniform(0.7, 1.3)])
        un = u / math.sqrt(sum(x * x for x in u))
        vn = v / math.sqrt(sum(x * x for x in v))
        reach = sum(a * b for a, b in zip(un, theta))
        factor = 1 + cs[0] * (z[0] - 0.0) + cs[1] * (z[1] - 1.0)
        score = s * (1 - math.exp(-rate * reach)) * factor
        imp = m * sum(a * b for a, b in zip(vn, theta)) * z[1]
        got = true_response(c, theta, z)
        assert got.score_delta == pytest.approx(score, abs=1e-12)
        assert got.impressions_delta == pytest.approx(imp, abs=1e-12)
        np.testing.assert_allclose(true_response_many(c, theta[None], z)[0], [score, imp], atol=1e-12)

    @given(st.floats(0, 3), st.floats(0, 3))
    def test_monotone_in_reach(self, a, b):
        c = cohort()
        lo, hi = sorted([a, b])
        d = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
        assert true_response(c, lo * d, CONTEXT_MEAN)[0] <= true_response(c, hi * d, CONTEXT_MEAN)[0]


class TestObserve:
    def env(self, sd=0.0, budget=1.5):
        c1 = cohort(id="a", weight=0.25, score_noise_sd=sd, impression_noise_sd=sd)
        c2 = cohort(id="b", weight=0.75, saturation=1.0, score_noise_sd=sd, impression_noise_sd=sd)
        return Environment((c1, c2), impression_budget=budget)

    def test_noiseless_is_exact(self):
        env = self.env()
        th = [np.full(3, 0.3), np.full(3, 0.6)]
        z = np.array([0.2, 1.05])
        pairs, report = env.observe(th, z, np.random.default_rng(0))
        for k, c in enumerate(env.cohorts):
            assert tuple(pairs[k]) == tuple(true_response(c, th[k], z))
        np.testing.assert_array_equal(report.per_cohort[:, 0], pairs[:, 1] - 1.5)

    def test_constraint_zero_at_budget(self):
        env = self.env()
        th = [np.full(3, 0.3)] * 2
        budget = true_response(env.cohorts[0], th[0], CONTEXT_MEAN).impressions_delta
        env = self.env(budget=budget)
        _, report = env.observe(th, CONTEXT_MEAN, np.random.default_rng(0))
        assert report.per_cohort[0, 0] == 0.0

    def test_law_of_large_numbers(self):
        env = self.env(sd=0.5)
        th = [np.full(3, 0.4), np.full(3, 0.2)]
        z = np.array([0.0, 1.0])
        stream = np.random.default_rng(42)
        draws = np.array([env.observe(th, z, stream)[0] for _ in range(1000)])
        for k, c in enumerate(env.cohorts):
            err = np.abs(draws[:, k].mean(axis=0) - np.asarray(true_response(c, th[k], z)))
            assert np.all(err <= 3 * 0.5 / math.sqrt(1000))

    def test_same_seed_same_draws(self):
        env = self.env(sd=0.2)
        th = [np.full(3, 0.4)] * 2
        a = env.observe(th, CONTEXT_MEAN, np.random.default_rng(9))[0]
        b = env.observe(th, CONTEXT_MEAN, np.random.default_rng(9))[0]
        assert np.array_equal(a, b)

    def test_decision_count_checked(self):
        with pytest.raises(ValueError):
            self.env().observe([np.zeros(3)], CONTEXT_MEAN, np.random.default_rng(0))


class TestAggregate:
    def test_identical_pairs(self):
        assert aggregate([(1.5, -2.0)] * 3, [0.2, 0.3, 0.5]) == pytest.approx((1.5, -2.0))

    def test_single_cohort(self):
        assert aggregate([(0.7, 0.1)], [1.0]) == (0.7, 0.1)

    def test_weight_mismatch(self):
        with pytest.raises(ValueError):
            aggregate([(1, 1), (2, 2)], [1.0])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_weighted_sum_oracle_and_bounds(self, seed, k):
        r = np.random.default_rng(seed)
        P = r.normal(size=(k, 2))
        w = r.dirichlet(np.ones(k))
        got = aggregate(P, w)
        for j in range(2):
            want = sum(w[i] * P[i, j] for i in range(k))
            assert got[j] == pytest.approx(want, abs=1e-12)
            assert P[:, j].min() - 1e-12 <= got[j] <= P[:, j].max() + 1e-12


class TestBenchmark:
    env = benchmark_env_3cohort()

    def test_shape(self):
        assert self.env.n_cohorts == 3 and self.env.policy_dim == 3
        assert [c.id for c in self.env.cohorts] == ["high", "moderate", "insensitive"]

    def test_zero_policy_feasible_below_target(self):
        pairs, report = self.env.observe([np.zeros(3)] * 3, CONTEXT_MEAN, np.random.default_rng(0))
        mean = np.array([true_response(c, np.zeros(3), CONTEXT_MEAN) for c in self.env.cohorts])
        platform = aggregate(mean, self.env.weights)
        assert platform == (0.0, 0.0)
        assert platform.score_delta < self.env.score_target
        assert platform.impressions_delta <= self.env.impression_budget

    def test_insensitive_below_high_at_max_policy(self):
        high, _, insensitive = self.env.cohorts
        assert true_response(insensitive, np.ones(3), CONTEXT_MEAN)[0] < true_response(high, np.ones(3), CONTEXT_MEAN)[0]

    def test_distinct_trade_off_slopes(self):
        slopes = [c.saturation * c.rate / c.impression_gain for c in self.env.cohorts]
        assert slopes[0] > slopes[1] > slopes[2]

    def test_cached_grid_scan_matches_fresh_scan(self):
        text = (resources.files("ctrcbo") / "data" / "benchmark_3cohort_gridscan.json").read_text()
        cached = GridScanCertificate.from_json(text)
        fresh = scan(self.env, [0, 0, 0], [1, 1, 1], 50)
        assert fresh == cached
        assert fresh.feasible(0.2)
        # the untuned midpoint profile overshoots the budget
        assert fresh.midpoint_impressions > self.env.impression_budget


def test_minkowski_front_matches_bruteforce(rng):
    a = rng.uniform(size=(6, 2))
    b = rng.uniform(size=(5, 2))
    got = {tuple(np.round(p, 12)) for p in minkowski_front(a, b)}
    sums = [x + y for x in a for y in b]
    want = {
        tuple(np.round(s, 12)) for s in sums
        if not any(o[0] >= s[0] and o[1] <= s[1] and (o != s).any() for o in sums)
    }
    assert got == want


def test_platform_front_contains_zero_policy():
    env = Environment((cohort(),))
    front = platform_front(env, [0, 0, 0], [1, 1, 1], n=5)
    assert any(np.allclose(p, 0.0) for p in front)


class TestCausalSeed:
    def test_centers_follow_score_direction(self):
        env = benchmark_env_3cohort()
        centers = causal_seed_centers(env, [0, 0, 0], [1, 1, 1], 0.5)
        np.testing.assert_allclose(centers[0], [0.5, 0.1, 0.0])
        np.testing.assert_allclose(centers[1], [0.0, 0.5, 0.1])
        for c in centers:
            assert np.all(c >= 0) and np.all(c <= 1)

    def test_zero_intensity_is_lower_corner(self):
        env = benchmark_env_3cohort()
        for c in causal_seed_centers(env, [0.2, 0, 0], [1, 1, 1], 0.0):
            np.testing.assert_array_equal(c, [0.2, 0, 0])

    def test_bad_intensity(self):
        with pytest.raises(ValueError):
            causal_seed_centers(benchmark_env_3cohort(), [0] * 3, [1] * 3, 1.5)


def test_cohort_validation():
    with pytest.raises(ValueError):
        cohort(weight=1.2)
    with pytest.raises(ValueError):
        cohort(rate=0.0)
    with pytest.raises(ValueError):
        cohort(score_noise_sd=-1.0)
    with pytest.raises(ValueError):
        Environment((cohort(weight=0.5),))
