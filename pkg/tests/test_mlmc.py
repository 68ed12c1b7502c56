"""Multilevel estimator machinery on synthetic problems."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenpot import mlmc
from greenpot.geometry import stream_for


class SyntheticProblem:
    """f_l(omega) = g(omega) + bias * h_l^p + noise * h_l^q * xi_l(omega).

    Exact power laws in the mesh; the coupled noise term makes the level
    corrections decay with beta = 2q.
    """

    def __init__(self, bias=1.0, p=2.0, noise=0.5, q=2.0, base=0.0):
        self.bias, self.p, self.noise, self.q, self.base = bias, p, noise, q, base

    def draw(self, generator):
        return generator.standard_normal(2)

    def level_value(self, realization, hierarchy, level):
        h = hierarchy.h(level)
        value = (
            self.base
            + realization[0]
            + self.bias * h**self.p
            + self.noise * h**self.q * realization[1]
        )
        return value, hierarchy.n_nodes(level) ** 3.0


class DeterministicProblem:
    def draw(self, generator):
        return None

    def level_value(self, realization, hierarchy, level):
        return 1.0 + hierarchy.h(level) ** 2, 1.0


class FlatNoiseProblem:
    """Corrections whose variance does not decay with the level."""

    def draw(self, generator):
        return generator.standard_normal(8)

    def level_value(self, realization, hierarchy, level):
        return float(realization[level % 8]), 1.0


HIER = mlmc.LevelHierarchy(h0=1 / 8)


class TestHierarchy:
    def test_nesting(self):
        assert [HIER.n_nodes(l) for l in range(5)] == [8, 16, 32, 64, 128]
        assert HIER.h(3) == pytest.approx(1 / 64)

    def test_invalid(self):
        with pytest.raises(ValueError):
            mlmc.LevelHierarchy(h0=2.0)
        with pytest.raises(ValueError):
            mlmc.LevelHierarchy(q=1)


class TestCoupledSample:
    def test_level_zero_has_no_coarse_term(self):
        prob = SyntheticProblem()
        corr = mlmc.coupled_sample(0, HIER, prob, stream_for(0, 0, 0))
        assert corr.coarse == 0.0
        assert corr.delta == corr.fine

    def test_deterministic_problem_identical_streams(self):
        prob = DeterministicProblem()
        deltas = {
            mlmc.coupled_sample(2, HIER, prob, stream_for(0, 2, k)).delta for k in range(5)
        }
        assert len(deltas) == 1

    def test_same_realization_for_both_levels(self):
        prob = SyntheticProblem(bias=0.0, noise=0.0)
        corr = mlmc.coupled_sample(3, HIER, prob, stream_for(1, 3, 7))
        assert corr.delta == pytest.approx(0.0, abs=1e-15)

    def test_errors_tagged_with_level_and_stream(self):
        class Broken:
            def draw(self, generator):
                raise RuntimeError("boom")

        with pytest.raises(mlmc.SampleEvaluationError, match="level 2"):
            mlmc.coupled_sample(2, HIER, Broken(), stream_for(0, 2, 5))


class TestPilot:
    def test_constant_functional_zero_variance(self):
        stats = mlmc.pilot_run(HIER, DeterministicProblem(), 8, seed=0, levels=2)
        assert all(stats[l].variance == 0.0 for l in stats)

    def test_hand_variance(self):
        class TwoValues:
            def draw(self, generator):
                return generator.integers(0, 2**30)

            def level_value(self, realization, hierarchy, level):
                return (1.0, 1.0) if realization % 2 == 0 else (3.0, 1.0)

        # find a seed/level slice giving one even and one odd draw
        stats = None
        for seed in range(20):
            stats = mlmc.pilot_run(HIER, TwoValues(), 2, seed=seed, levels=0)
            if stats[0].variance > 0:
                break
        assert stats[0].variance == pytest.approx(2.0)

    def test_requires_two_samples(self):
        with pytest.raises(ValueError):
            mlmc.pilot_run(HIER, DeterministicProblem(), 1, seed=0, levels=1)


class TestAllocation:
    def test_hand_example(self):
        m = mlmc.allocate_samples([1.0, 0.25], [1.0, 4.0], 0.1)
        assert list(m) == [200, 50]

    def test_single_level_collapses_to_plain_mc(self):
        m = mlmc.allocate_samples([0.7], [3.0], 0.05)
        assert m[0] == math.ceil(0.7 / 0.05**2)

    def test_zero_variance_floors_at_one(self):
        assert list(mlmc.allocate_samples([0.0, 0.0], [1.0, 2.0], 0.1)) == [1, 1]

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(1e-8, 1e3), min_size=1, max_size=6),
        st.floats(1e-3, 0.5),
    )
    def test_variance_budget_always_met(self, v, eps):
        c = [1.0 + 3.0 * k for k in range(len(v))]
        m = mlmc.allocate_samples(v, c, eps)
        assert np.all(m >= 1)
        assert np.sum(np.asarray(v) / m) <= eps**2 * (1 + 1e-12)

    def test_homogeneity_in_variance(self):
        v = np.array([0.9, 0.2, 0.04])
        c = np.array([1.0, 6.0, 40.0])
        m1 = mlmc.allocate_samples(v, c, 0.05)
        m4 = mlmc.allocate_samples(4.0 * v, c, 0.05)
        # scaling all variances scales every count by the same factor
        np.testing.assert_allclose(m4 / m1, 4.0, rtol=0.02)

    def test_allocation_near_discrete_optimum(self):
        v = np.array([1.0, 0.1, 0.01])
        c = np.array([1.0, 8.0, 64.0])
        eps = 0.07
        m = mlmc.allocate_samples(v, c, eps)
        base_cost = np.sum(m * c)
        for k in range(len(m)):
            if m[k] <= 1:
                continue
            trial = m.copy()
            trial[k] -= 1
            if np.sum(v / trial) <= eps**2:
                # compensating increases elsewhere may not beat the
                # allocated cost by more than one sample's cost
                assert np.sum(trial * c) >= base_cost - c[k]


class TestChooseLevels:
    def test_no_refinement_needed(self):
        assert mlmc.choose_levels(0.25, 2, 2.0, eps_i=1.0, bias_constant=1.0) == 0

    def test_halving_eps_adds_at_most_one_level(self):
        for eps in (0.1, 0.05, 0.01):
            l1 = mlmc.choose_levels(0.125, 2, 2.0, eps, 1.0)
            l2 = mlmc.choose_levels(0.125, 2, 2.0, eps / 2, 1.0)
            assert l2 - l1 <= 1

    def test_hand_example(self):
        c, h0 = 3.7, 0.125
        assert mlmc.choose_levels(h0, 2, 2.0, c * h0**2 / 16, c) == 2


class TestFitRates:
    def test_exact_power_laws(self):
        hs = [2.0 ** (-l) for l in range(5)]
        e = [h**2 for h in hs]
        v = [h**4 for h in hs]
        c = [h**-3.0 for h in hs]
        alpha, beta, rho = mlmc.fit_rates(hs, e, v, c)
        assert alpha == pytest.approx(2.0, abs=1e-10)
        assert beta == pytest.approx(4.0, abs=1e-10)
        assert rho == pytest.approx(3.0, abs=1e-10)

    def test_needs_three_levels_beyond_zero(self):
        with pytest.raises(ValueError):
            mlmc.fit_rates([1.0, 0.5, 0.25], [1, 1, 1], [1, 1, 1], [1, 1, 1])


class TestEstimator:
    def test_deterministic_problem(self):
        prob = DeterministicProblem()
        cfg = mlmc.MlmcConfig(seed=0, pilot_samples=4, pilot_levels=3)
        res = mlmc.mlmc_estimate(prob, 1e-3, HIER, cfg)
        levels = res.plan.levels
        expected = 1.0 + HIER.h(levels) ** 2
        assert res.estimate == pytest.approx(expected, abs=1e-14)
        assert all(lv["variance"] == 0.0 for lv in res.levels)
        assert all(lv["samples"] >= 1 for lv in res.levels)

    def test_telescoping_identity(self):
        prob = DeterministicProblem()
        total = 0.0
        for level in range(4):
            total += mlmc.coupled_sample(level, HIER, prob, stream_for(0, level, 0)).delta
        f3, _ = prob.level_value(None, HIER, 3)
        assert total == pytest.approx(f3, rel=1e-14)

    def test_estimator_mean_unbiased_at_fixed_level(self):
        # 3 sigma statistical check against plain MC at the finest level
        prob = SyntheticProblem(bias=0.3, p=2.0, noise=0.4, q=2.0, base=1.0)
        runs = 40
        estimates = []
        for seed in range(runs):
            cfg = mlmc.MlmcConfig(seed=seed, pilot_samples=16, pilot_levels=3, eps_split=0.5)
            res = mlmc.mlmc_estimate(prob, 0.05, HIER, cfg)
            estimates.append(res.estimate)
        level = 3
        ref_mean, ref_var, m = mlmc.plain_mc(HIER, prob, level, 4000, seed=999)
        sd = math.sqrt(np.var(estimates, ddof=1) / runs + ref_var / m)
        assert abs(np.mean(estimates) - ref_mean) <= 3.5 * sd + 0.3 * HIER.h(level) ** 2

    def test_reproducible_across_threads(self):
        prob = SyntheticProblem()
        out = []
        for threads in (1, 4):
            cfg = mlmc.MlmcConfig(seed=5, pilot_samples=8, pilot_levels=3, threads=threads)
            out.append(mlmc.mlmc_estimate(prob, 0.01, HIER, cfg))
        assert out[0].estimate == out[1].estimate
        assert [a["samples"] for a in out[0].levels] == [b["samples"] for b in out[1].levels]

    def test_non_decaying_variance_raises(self):
        cfg = mlmc.MlmcConfig(seed=0, pilot_samples=32, pilot_levels=3)
        with pytest.raises(mlmc.MlmcError, match="decay"):
            mlmc.mlmc_estimate(FlatNoiseProblem(), 1e-4, HIER, cfg)

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            mlmc.mlmc_estimate(DeterministicProblem(), -1.0, HIER, mlmc.MlmcConfig())

    def test_mse_budget_reported(self):
        prob = SyntheticProblem()
        cfg = mlmc.MlmcConfig(seed=1, pilot_samples=16, pilot_levels=3)
        res = mlmc.mlmc_estimate(prob, 0.05, HIER, cfg)
        assert res.mse_budget >= 0
        assert np.isfinite(res.total_cost_model)
