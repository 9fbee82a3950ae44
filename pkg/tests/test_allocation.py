import dataclasses
import math

import numpy as np
import pytest

from crpower import sample_count
from crpower.allocation import (
    UnboundedError,
    closed_form_power,
    solve_dual,
    stationarity_terms,
    subgradient,
)
from crpower.partition import Partition
from crpower.statistics import LOG2E, EnergyDistribution, gamma_quantile, interval_probs
from tests.conftest import random_scenario


def lagrangian_integrand(s, p_row, lam, mu, power):
    """Per-interval Lagrangian term whose maximizer the closed form must hit."""
    p0, p1 = p_row
    return (
        s.q0 * p0 * math.log2(1 + power * s.h / s.n0)
        + s.q1 * p1 * math.log2(1 + power * s.h / (s.n0 + s.g2 * s.pp))
        - lam * power * (s.q0 * p0 + s.q1 * p1)
        - mu * s.q1 * s.gamma_ * power * p1
    )


def golden_section_max(fun, lo, hi, iters=200):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
        else:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
    return 0.5 * (a + b)


def bisect_lambda_for_power_budget(s, p, tau, iters=200):
    """Independent oracle: smallest lam with mu=0 meeting the power budget."""
    lo, hi = 1e-12, 1e6
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        pv = closed_form_power(s, p, tau, (mid, 0.0))
        C, _ = subgradient(s, pv, p, tau)
        if C >= 0:
            hi = mid
        else:
            lo = mid
    return hi


@pytest.fixture()
def m2_setup(fast_scenario):
    s = fast_scenario
    tau = 0.005
    n = sample_count(s, tau)
    d = EnergyDistribution.from_scenario(s, n)
    eta = d.scale0 * gamma_quantile(n, 0.6)
    part = Partition.from_inner_thresholds((eta,))
    return s, tau, part, interval_probs(d, part)


class TestClosedFormPower:
    def test_collapses_to_water_filling(self, fast_scenario):
        # no cross interference and no interference price: the quadratic
        # degenerates to the classic water level log2(e)/lam - n0/h
        s = dataclasses.replace(fast_scenario, g2=0.0)
        p = np.array([[0.6, 0.2], [0.4, 0.8]])
        for lam in (0.05, 0.2, 1.0, 5.0):
            pv = closed_form_power(s, p, 0.01, (lam, 0.0))
            expect = max(LOG2E / lam - s.n0 / s.h, 0.0)
            assert pv == pytest.approx([expect, expect], rel=1e-12)

    def test_infinite_price_kills_power(self, fast_scenario):
        p = np.array([[0.6, 0.2], [0.4, 0.8]])
        pv = closed_form_power(fast_scenario, p, 0.01, (1e9, 0.0))
        assert np.all(pv == 0.0)

    def test_unbounded_guard(self, fast_scenario):
        p = np.array([[1.0, 1.0]])
        with pytest.raises(UnboundedError):
            closed_form_power(fast_scenario, p, 0.0, (0.0, 0.0))

    def test_degenerate_interval_gets_zero(self, fast_scenario):
        p = np.array([[0.7, 0.3], [0.0, 0.0], [0.3, 0.7]])
        pv = closed_form_power(fast_scenario, p, 0.01, (0.2, 0.1))
        assert pv[1] == 0.0 and pv[0] > 0.0 and pv[2] > 0.0

    def test_matches_scalar_maximizer(self, m2_setup):
        s, tau, part, p = m2_setup
        rng = np.random.default_rng(5)
        for _ in range(20):
            lam = float(rng.uniform(0.02, 2.0))
            mu = float(rng.uniform(0.0, 2.0))
            pv = closed_form_power(s, p, tau, (lam, mu))
            for i in range(part.m):
                ref = golden_section_max(
                    lambda q: lagrangian_integrand(s, p[i], lam, mu, q), 0.0, 1e4
                )
                assert pv[i] == pytest.approx(ref, rel=1e-6, abs=1e-6)

    def test_stationarity_at_positive_powers(self, m2_setup):
        s, tau, part, p = m2_setup
        pv = closed_form_power(s, p, tau, (0.1, 0.3))
        for i in range(part.m):
            if pv[i] <= 0:
                continue
            eps = 1e-6 * max(pv[i], 1.0)
            up = lagrangian_integrand(s, p[i], 0.1, 0.3, pv[i] + eps)
            down = lagrangian_integrand(s, p[i], 0.1, 0.3, pv[i] - eps)
            at = lagrangian_integrand(s, p[i], 0.1, 0.3, pv[i])
            assert at >= up and at >= down


class TestSubgradient:
    def test_zero_powers_give_full_budgets(self, m2_setup):
        s, tau, part, p = m2_setup
        C, D = subgradient(s, np.zeros(2), p, tau)
        assert C == s.p_avg and D == s.i_avg

    def test_single_level_exact_spend(self, fast_scenario):
        s = fast_scenario
        p = np.ones((1, 2))
        C, D = subgradient(s, np.array([s.p_avg]), p, 0.0)
        assert C == pytest.approx(0.0, abs=1e-12)
        assert D == pytest.approx(s.i_avg - s.gamma_ * s.q1 * s.p_avg, abs=1e-12)


class TestSolveDual:
    def test_single_level_tighter_budget_binds(self, paper_scenario):
        s = paper_scenario
        pv, ds, gap = solve_dual(s, Partition.single(), 0.0)
        assert pv[0] == pytest.approx(min(s.p_avg, s.i_avg / (s.gamma_ * s.q1)), rel=1e-7)
        assert pv[0] == pytest.approx(5.0 / 3.0, rel=1e-6)
        assert ds.converged

    def test_kkt_at_convergence(self, m2_setup):
        s, tau, part, p = m2_setup
        pv, ds, gap = solve_dual(s, part, tau)
        C, D = subgradient(s, pv, p, tau)
        assert C >= -1e-6 * s.p_avg and D >= -1e-6 * s.i_avg
        assert abs(ds.lam * C) <= 1e-5 * s.p_avg
        assert abs(ds.mu * D) <= 1e-5 * s.i_avg
        assert ds.lam >= 0 and ds.mu >= 0

    def test_duality_gap_small(self, m2_setup):
        s, tau, part, p = m2_setup
        pv, ds, gap = solve_dual(s, part, tau)
        from crpower.allocation import _rate

        rate = _rate(s, pv, p, tau)
        assert 0 <= gap <= 1e-5 * rate + 1e-12

    def test_power_only_budget_matches_bisection(self, fast_scenario, m2_setup):
        # huge interference budget: mu -> 0 and lam equals the bisection root
        s, tau, part, p = m2_setup
        s_loose = dataclasses.replace(s, i_avg=1e6)
        pv, ds, gap = solve_dual(s_loose, part, tau)
        assert ds.mu == 0.0
        lam_ref = bisect_lambda_for_power_budget(s_loose, p, tau)
        assert ds.lam == pytest.approx(lam_ref, rel=1e-5)

    def test_tau_equals_frame_returns_zeros(self, fast_scenario):
        s = fast_scenario
        pv, ds, gap = solve_dual(s, Partition.single(), s.frame_t)
        assert np.all(pv == 0.0) and gap == 0.0

    def test_dual_value_monotone_over_windows(self, m2_setup):
        s, tau, part, p = m2_setup
        pv, ds, gap = solve_dual(s, part, tau, record_history=True)
        g = np.asarray(ds.g_trace)
        if len(g) >= 200:
            mins = [g[i : i + 100].min() for i in range(0, len(g) - 100, 100)]
            assert all(b <= a + 1e-9 * max(abs(a), 1.0) for a, b in zip(mins, mins[1:]))

    def test_pinned_level_stays_zero(self, m2_setup):
        s, tau, part, p = m2_setup
        pv, ds, gap = solve_dual(s, part, tau, pinned_zero=(1,))
        assert pv[1] == 0.0 and pv[0] > 0.0


class TestMonotoneStructure:
    def test_terms_nonincreasing_over_intervals(self, fast_scenario):
        s = fast_scenario
        n = 100
        d = EnergyDistribution.from_scenario(s, n)
        inner = tuple(d.scale0 * gamma_quantile(n, q) for q in (0.25, 0.5, 0.75))
        p = interval_probs(d, Partition.from_inner_thresholds(inner))
        A, Delta, W = stationarity_terms(s, p, 0.15, 0.25)
        assert all(a >= b - 1e-12 for a, b in zip(A, A[1:]))
        assert all(a >= b - 1e-12 for a, b in zip(Delta, Delta[1:]))

    def test_powers_nonincreasing_randomized(self):
        rng = np.random.default_rng(77)
        checked = 0
        for _ in range(25):
            s = random_scenario(rng)
            n = int(rng.integers(20, 300))
            if s.g1 * s.pp <= 0:
                continue
            d = EnergyDistribution.from_scenario(s, n)
            probs = sorted(rng.uniform(0.02, 0.98, size=s.m - 1))
            inner = tuple(d.scale0 * gamma_quantile(n, q) for q in probs)
            p = interval_probs(d, Partition.from_inner_thresholds(inner))
            lam = float(rng.uniform(1e-3, 1.0))
            mu = float(rng.uniform(0.0, 1.0))
            pv = closed_form_power(s, p, 0.01, (lam, mu))
            assert all(a >= b - 1e-9 for a, b in zip(pv, pv[1:])), (s, pv)
            checked += 1
        assert checked >= 20
