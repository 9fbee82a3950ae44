import math

import numpy as np
import pytest

from crpower import sample_count
from crpower.partition import (
    DistortionParams,
    Partition,
    average_distortion,
    crossing_coefficients,
    crossing_point,
    design_partition,
    distortion,
    scaled_scores,
    verify_farthest_neighbor,
)
from crpower.statistics import EnergyDistribution, gamma_quantile
from tests.conftest import random_scenario


def oracle_distortion(s, n, powers, lam, mu, x, i):
    """Direct, independent evaluation of the pointwise level score."""
    p = powers[i]
    s0, s1 = s.n0, s.n0 + s.g1 * s.pp
    f0 = x ** (n - 1) * math.exp(-x / s0) / (math.gamma(n) * s0**n)
    f1 = x ** (n - 1) * math.exp(-x / s1) / (math.gamma(n) * s1**n)
    return (
        s.q0 * math.log2(1 + p * s.h / s.n0) * f0
        - mu * s.q1 * s.gamma_ * p * f1
        + s.q1 * math.log2(1 + p * s.h / (s.n0 + s.g2 * s.pp)) * f1
        - lam * p * (s.q0 * f0 + s.q1 * f1)
    )


def contrast_sign(dp, i, k, x):
    """Sign of the level contrast via the rescaled scores (bisection oracle)."""
    sc = scaled_scores(dp, [x])[0]
    return sc[i] - sc[k]


def bisect_contrast_root(dp, i, k, lo, hi, iters=200):
    flo = contrast_sign(dp, i, k, lo)
    fhi = contrast_sign(dp, i, k, hi)
    assert flo * fhi < 0, "oracle bracket must straddle the crossing"
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = contrast_sign(dp, i, k, mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture(scope="module")
def converged_m2(fast_scenario):
    """A converged (powers, lam, mu) pair on a mid-overlap sensing time."""
    from crpower.optimizer import lloyd_solve

    s = fast_scenario
    tau = 0.005  # n = 100 at fs = 2e4
    policy, frag = lloyd_solve(s, tau, m=2)
    ds = frag["dual"]
    return s, sample_count(s, tau), policy, ds


class TestDistortion:
    def test_zero_power_means_zero_score(self, fast_scenario):
        dp = DistortionParams((0.0, 2.0), 0.1, 0.1, fast_scenario, 50)
        for x in (30.0, 50.0, 80.0):
            assert distortion(dp, x, 0) == 0.0

    def test_without_prices_bigger_power_always_wins(self, fast_scenario):
        dp = DistortionParams((1.0, 4.0), 0.0, 0.0, fast_scenario, 50)
        for x in (30.0, 50.0, 80.0):
            assert distortion(dp, x, 1) > distortion(dp, x, 0)

    def test_matches_independent_formula(self, fast_scenario):
        s = fast_scenario
        rng = np.random.default_rng(1)
        n = 40
        for _ in range(25):
            powers = tuple(rng.uniform(0.0, 8.0, size=3))
            lam, mu = rng.uniform(0.01, 1.0, size=2)
            x = rng.uniform(20.0, 80.0)
            i = int(rng.integers(0, 3))
            dp = DistortionParams(powers, lam, mu, s, n)
            expect = oracle_distortion(s, n, powers, lam, mu, x, i)
            assert distortion(dp, x, i) == pytest.approx(expect, rel=1e-10, abs=1e-300)

    def test_rejects_bad_inputs(self, fast_scenario):
        dp = DistortionParams((1.0, 2.0), 0.0, 0.0, fast_scenario, 10)
        with pytest.raises(ValueError):
            distortion(dp, -1.0, 0)
        with pytest.raises(ValueError):
            distortion(dp, 5.0, 7)


class TestCrossingPoint:
    def test_identical_levels_have_no_crossing(self, fast_scenario):
        dp = DistortionParams((2.0, 2.0), 0.1, 0.2, fast_scenario, 50)
        assert crossing_point(dp, 0, 1) is None
        a, b = crossing_coefficients(dp, 0, 1)
        assert a == 0.0 and b == 0.0

    def test_same_sign_coefficients_mean_dominance(self, fast_scenario):
        # without prices the larger power dominates at every energy
        dp = DistortionParams((1.0, 4.0), 0.0, 0.0, fast_scenario, 50)
        a, b = crossing_coefficients(dp, 1, 0)
        assert a > 0 and b > 0
        assert crossing_point(dp, 1, 0) is None

    def test_rejects_equal_indices(self, fast_scenario):
        dp = DistortionParams((1.0, 2.0), 0.1, 0.1, fast_scenario, 10)
        with pytest.raises(ValueError):
            crossing_point(dp, 1, 1)

    def test_matches_bisection_root(self, converged_m2):
        s, n, policy, ds = converged_m2
        dp = DistortionParams(policy.powers, ds.lam, ds.mu, s, n)
        x = crossing_point(dp, 0, 1)
        assert x is not None
        lo = s.n0 * gamma_quantile(n, 1e-9)
        hi = (s.n0 + s.g1 * s.pp) * gamma_quantile(n, 1 - 1e-9)
        root = bisect_contrast_root(dp, 0, 1, lo, hi)
        assert x == pytest.approx(root, rel=1e-8)

    def test_sign_structure_around_crossing(self, converged_m2):
        s, n, policy, ds = converged_m2
        dp = DistortionParams(policy.powers, ds.lam, ds.mu, s, n)
        x = crossing_point(dp, 0, 1)
        eps = 1e-6 * x
        assert contrast_sign(dp, 0, 1, x - eps) * contrast_sign(dp, 0, 1, x + eps) < 0

    def test_degenerate_gain_separation(self, fast_scenario):
        import dataclasses

        s = dataclasses.replace(fast_scenario, g1=1e-15)
        dp = DistortionParams((1.0, 3.0), 0.05, 0.05, s, 50)
        assert crossing_point(dp, 0, 1) is None


class TestDesignPartition:
    def test_single_level(self, fast_scenario):
        dp = DistortionParams((2.0,), 0.1, 0.1, fast_scenario, 50)
        part = design_partition(dp)
        assert part.thresholds == (0.0, math.inf)
        assert part.assignment == (0,)

    def test_no_prices_collapses_to_largest_power(self, fast_scenario):
        dp = DistortionParams((1.0, 4.0), 0.0, 0.0, fast_scenario, 50)
        part = design_partition(dp)
        assert sum(part.empty_intervals) == 1
        real = [lvl for lvl, empty in zip(part.assignment, part.empty_intervals) if not empty]
        assert real == [1]

    def test_assignment_is_permutation_and_intervals_contiguous(self, converged_m2):
        s, n, policy, ds = converged_m2
        for m, powers in ((2, policy.powers), (4, (8.0, 5.0, 2.0, 0.5))):
            dp = DistortionParams(powers[:m], ds.lam, ds.mu, s, n)
            part = design_partition(dp)
            assert sorted(part.assignment) == list(range(m))
            thr = part.thresholds
            assert all(a <= b for a, b in zip(thr, thr[1:]))

    def test_grid_argmax_oracle(self, converged_m2):
        s, n, policy, ds = converged_m2
        dp = DistortionParams(policy.powers, ds.lam, ds.mu, s, n)
        part = design_partition(dp)
        d = dp.dist
        lo = min(d.scale0, d.scale1) * gamma_quantile(n, 1e-6)
        hi = max(d.scale0, d.scale1) * gamma_quantile(n, 1 - 1e-6)
        grid = np.linspace(lo, hi, 4000)
        scores = scaled_scores(dp, grid)
        best = scores.argmax(axis=1)
        assigned = part.level_indices(grid)
        inner = np.asarray(part.thresholds[1:-1])
        near = np.zeros(len(grid), dtype=bool)
        for t in inner:
            if math.isfinite(t):
                near |= np.abs(grid - t) <= 1e-6 * t
        mismatch = (best != assigned) & ~near
        assert not mismatch.any()

    def test_farthest_neighbor_holds_by_construction(self, converged_m2):
        s, n, policy, ds = converged_m2
        dp = DistortionParams(policy.powers, ds.lam, ds.mu, s, n)
        part = design_partition(dp)
        ok, worst = verify_farthest_neighbor(dp, part, grid_size=4000)
        assert ok, f"worst violation {worst}"

    def test_corrupted_assignment_fails_verification(self, converged_m2):
        s, n, policy, ds = converged_m2
        dp = DistortionParams(policy.powers, ds.lam, ds.mu, s, n)
        part = design_partition(dp)
        swapped = Partition(part.thresholds, tuple(reversed(part.assignment)))
        ok, worst = verify_farthest_neighbor(dp, swapped, grid_size=4000)
        assert not ok and worst > 1e-6

    def test_designed_beats_random_partitions(self, converged_m2):
        s, n, policy, ds = converged_m2
        powers = (7.0, 3.0, 1.0)
        dp = DistortionParams(powers, ds.lam, ds.mu, s, n)
        part = design_partition(dp)
        target = average_distortion(dp, part)
        d = dp.dist
        rng = np.random.default_rng(9)
        lo = min(d.scale0, d.scale1) * gamma_quantile(n, 1e-4)
        hi = max(d.scale0, d.scale1) * gamma_quantile(n, 1 - 1e-4)
        for _ in range(40):
            inner = tuple(sorted(rng.uniform(lo, hi, size=2)))
            perm = tuple(rng.permutation(3).tolist())
            rand_part = Partition.from_inner_thresholds(inner, perm)
            assert average_distortion(dp, rand_part) <= target + 1e-12

    def test_designed_beats_equiprobable_start(self, converged_m2):
        s, n, policy, ds = converged_m2
        powers = (7.0, 3.0, 1.0)
        dp = DistortionParams(powers, ds.lam, ds.mu, s, n)
        start = Partition.equiprobable(dp.dist, 3, hyp=0)
        designed = design_partition(dp)
        assert average_distortion(dp, designed) >= average_distortion(dp, start) - 1e-12

    def test_randomized_scenarios_keep_structure(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            s = random_scenario(rng, m=3)
            n = int(rng.integers(20, 200))
            powers = tuple(sorted(rng.uniform(0.0, 2 * s.p_avg, size=3), reverse=True))
            lam = float(rng.uniform(1e-3, 1.0))
            mu = float(rng.uniform(0.0, 1.0))
            dp = DistortionParams(powers, lam, mu, s, n)
            part = design_partition(dp)
            ok, worst = verify_farthest_neighbor(dp, part, grid_size=1500)
            assert ok, f"violation {worst} on {s}"
