"""Closed-form power allocation and the projected-subgradient dual solver.

For a fixed partition the per-interval optimal power is the positive root
of a quadratic in P (stationarity of the Lagrangian), which collapses to
classic water-filling when the two rate denominators coincide.  The two
multipliers (power price lam, interference price mu) are found by
projected subgradient steps on the dual, with a step size that halves
every epoch while restarting from the best iterate seen, which keeps the
tail convergence geometric across budget scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario, sample_count
from .statistics import LOG2E, EnergyDistribution, interval_probs

# Transient ceiling for intervals whose price underflows mid-iteration;
# the dual bounces back before convergence, and final policies are scaled
# into the feasible set regardless.
POWER_CAP = 1e12

_BOTH_ZERO = 1e-15


class UnboundedError(RuntimeError):
    """Both multipliers vanished while a finite budget is active."""


@dataclass
class DualState:
    """Multipliers plus step-schedule state and subgradient history."""

    lam: float
    mu: float
    step0: float = 0.0
    step: tuple = (0.0, 0.0)
    iterations: int = 0
    converged: bool = True
    subgradient: tuple = (math.nan, math.nan)
    history: list = field(default_factory=list)
    g_trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError(f"multipliers must be >= 0: lam={self.lam}, mu={self.mu}")


def _weights(s: Scenario, p: np.ndarray):
    """Budget weights per interval: w for average power, r for interference."""
    p = np.asarray(p, dtype=float)
    w = s.q0 * p[:, 0] + s.q1 * p[:, 1]
    r = s.q1 * s.gamma_ * p[:, 1]
    return w, r


def stationarity_terms(s: Scenario, p: np.ndarray, lam: float, mu: float):
    """Arrays (A, Delta, W) of the per-interval quadratic stationarity terms.

    W is the effective price; rows with W ~ 0 are degenerate (empty
    interval) or unpriced (transiently unbounded) and are resolved by the
    caller.  Overflowing entries propagate as inf and are capped there.
    """
    p = np.asarray(p, dtype=float)
    w, r = _weights(s, p)
    d0 = s.n0 / s.h
    d1 = (s.n0 + s.g2 * s.pp) / s.h
    W = lam * w + mu * r
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        inv = np.where(W > 0, 1.0 / np.where(W > 0, W, 1.0), np.inf)
        A = LOG2E * w * inv - (d0 + d1)
        Delta = A * A + 4.0 * (LOG2E * (s.q0 * p[:, 0] * d1 + s.q1 * p[:, 1] * d0) * inv - d0 * d1)
    return A, Delta, W


def closed_form_power(s: Scenario, p: np.ndarray, tau: float, ds, pinned_zero=()) -> np.ndarray:
    """Per-interval optimal powers [(A_i + sqrt(Delta_i))/2]^+ at fixed prices.

    Degenerate intervals (both conditional probabilities zero) get zero
    power; intervals whose price underflows while some probability remains
    are clamped at POWER_CAP so the dual iteration can recover.  Raises
    UnboundedError when both multipliers are effectively zero.
    """
    lam, mu = (ds.lam, ds.mu) if isinstance(ds, DualState) else (float(ds[0]), float(ds[1]))
    if lam < _BOTH_ZERO and mu < _BOTH_ZERO:
        raise UnboundedError(
            "both multipliers vanish: the allocation is unbounded under finite budgets"
        )
    if not (0.0 <= tau <= s.frame_t):
        raise ValueError(f"tau out of range [0, {s.frame_t}]: {tau}")
    p = np.asarray(p, dtype=float)
    degenerate = (p[:, 0] <= 0.0) & (p[:, 1] <= 0.0)
    A, Delta, W = stationarity_terms(s, p, lam, mu)
    Delta = np.maximum(Delta, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        powers = np.maximum(0.5 * (A + np.sqrt(Delta)), 0.0)
    powers = np.where(np.isfinite(powers), powers, POWER_CAP)
    powers = np.where(degenerate, 0.0, powers)
    powers = np.where((W <= 0.0) & ~degenerate, POWER_CAP, powers)
    powers = np.minimum(powers, POWER_CAP)
    if len(pinned_zero):
        powers[np.asarray(pinned_zero, dtype=int)] = 0.0
    return powers


def subgradient(s: Scenario, pv: np.ndarray, p: np.ndarray, tau: float):
    """Constraint slacks (C, D): C = P_budget - spent, D = I_budget - caused."""
    frac = (s.frame_t - tau) / s.frame_t
    w, r = _weights(s, p)
    pv = np.asarray(pv, dtype=float)
    C = s.p_avg - frac * float(np.dot(pv, w))
    D = s.i_avg - frac * float(np.dot(pv, r))
    return C, D


def _rate(s: Scenario, pv: np.ndarray, p: np.ndarray, tau: float) -> float:
    frac = (s.frame_t - tau) / s.frame_t
    snr0 = np.log1p(pv * s.h / s.n0) * LOG2E
    snr1 = np.log1p(pv * s.h / (s.n0 + s.g2 * s.pp)) * LOG2E
    return frac * float(np.dot(s.q0 * p[:, 0], snr0) + np.dot(s.q1 * p[:, 1], snr1))


def solve_dual(
    s: Scenario,
    part,
    tau: float,
    init: DualState | None = None,
    *,
    feas_tol: float = 1e-7,
    slack_tol: float = 1e-9,
    max_iter: int = 100_000,
    pinned_zero=(),
    record_history: bool = False,
    probs: np.ndarray | None = None,
):
    """Maximize the rate over powers for a fixed partition and sensing time.

    Projected subgradient on the two multipliers.  Each multiplier moves
    against the sign of its constraint slack with its own step size, which
    grows while the sign persists and halves on every sign flip; the
    resulting diminishing steps converge bisection-fast regardless of the
    budget scale.  Returns (powers, DualState, dual gap) with a
    primal-feasible power vector, rescaled into the budgets if the loop
    hits the iteration cap first.
    """
    n = sample_count(s, tau)
    if part.m > 1 and n < 1:
        raise ValueError("multi-level partitions need at least one sensing sample")
    if probs is None:
        if part.m == 1:
            probs = np.ones((1, 2))
        else:
            probs = interval_probs(EnergyDistribution.from_scenario(s, n), part)
    p = np.asarray(probs, dtype=float)
    frac = (s.frame_t - tau) / s.frame_t

    if frac <= 0.0:
        ds = DualState(lam=0.0, mu=0.0, iterations=0, subgradient=(s.p_avg, s.i_avg))
        return np.zeros(part.m), ds, 0.0

    lam = init.lam if init is not None else LOG2E / s.p_avg
    mu = init.mu if init is not None else 0.0
    lam = max(lam, _BOTH_ZERO * 10)
    step_lam = 0.5 * max(lam, LOG2E / s.p_avg)
    step_mu = 0.5 * LOG2E / s.i_avg
    step0 = (step_lam, step_mu)
    grow, shrink = 1.3, 0.5
    cap_lam, floor_lam = step_lam * 1e8, step_lam * 1e-22
    cap_mu, floor_mu = step_mu * 1e8, step_mu * 1e-22

    def kkt(lam_, mu_, C, D):
        viol = max(max(0.0, -C) / s.p_avg, max(0.0, -D) / s.i_avg)
        slack = max(lam_ * max(C, 0.0) / s.p_avg, mu_ * max(D, 0.0) / s.i_avg)
        return max(viol / feas_tol, slack / slack_tol)

    best = None  # (merit, lam, mu, powers, C, D)
    ds = DualState(lam=lam, mu=mu, step0=step_lam)
    prev_c_sign = prev_d_sign = 0
    floored = 0
    it = 0
    for it in range(1, max_iter + 1):
        powers = closed_form_power(s, p, tau, (lam, mu), pinned_zero=pinned_zero)
        C, D = subgradient(s, powers, p, tau)
        merit = kkt(lam, mu, C, D)
        if record_history:
            ds.history.append((C, D))
            ds.g_trace.append(_rate(s, powers, p, tau) + lam * C + mu * D)
        if best is None or merit < best[0]:
            best = (merit, lam, mu, powers, C, D)
        if merit <= 1.0:
            break

        c_sign = 1 if C > 0 else (-1 if C < 0 else 0)
        d_sign = 1 if D > 0 else (-1 if D < 0 else 0)
        if not (lam == 0.0 and c_sign > 0):  # pinned with slack: already optimal
            if c_sign and prev_c_sign:
                step_lam = min(step_lam * grow, cap_lam) if c_sign == prev_c_sign else max(step_lam * shrink, floor_lam)
            lam = max(lam - step_lam * c_sign, 0.0)
            prev_c_sign = c_sign
        if not (mu == 0.0 and d_sign > 0):
            if d_sign and prev_d_sign:
                step_mu = min(step_mu * grow, cap_mu) if d_sign == prev_d_sign else max(step_mu * shrink, floor_mu)
            mu = max(mu - step_mu * d_sign, 0.0)
            prev_d_sign = d_sign

        if lam < _BOTH_ZERO and mu < _BOTH_ZERO:
            lam = _BOTH_ZERO * 10
            floored += 1
            if floored > max_iter // 10:
                raise UnboundedError(
                    "both multipliers keep collapsing to zero: budgets appear inactive"
                )

    merit, lam, mu, powers, C, D = best
    converged = merit <= 1.0

    # always hand back a feasible vector; scaling is exact because both
    # constraints are linear in the powers
    spent = s.p_avg - C
    caused = s.i_avg - D
    fac = 1.0
    if spent > s.p_avg:
        fac = min(fac, s.p_avg / spent)
    if caused > s.i_avg:
        fac = min(fac, s.i_avg / caused)
    feasible = powers * fac

    g_value = _rate(s, powers, p, tau) + lam * C + mu * D
    gap = g_value - _rate(s, feasible, p, tau)

    ds.lam, ds.mu = lam, mu
    ds.step = (step_lam, step_mu)
    ds.iterations = it
    ds.converged = converged
    ds.subgradient = (C, D)
    return feasible, ds, gap
