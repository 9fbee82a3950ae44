"""Energy-axis partition design for a fixed set of power levels.

For fixed powers and multipliers the pointwise score of using level i at
received energy x is

    R(x, P_i) = u_i * f(x|H0) + v_i * f(x|H1)

with u_i = q0*(rate_h0(P_i) - lam*P_i) and
v_i = q1*(rate_h1(P_i) - (lam + mu*gamma)*P_i).  The level contrast
S_ik = R(x,P_i) - R(x,P_k) changes sign at most once in x because the
likelihood ratio f(x|H1)/f(x|H0) is strictly increasing, so the optimal
regions are contiguous intervals and can be built sequentially from the
pairwise crossing energies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scenario import Scenario
from .statistics import EnergyDistribution, gamma_quantile, log_pdf


@dataclass(frozen=True)
class Partition:
    """Ordered energy thresholds eta_0..eta_M plus the owning level per interval.

    thresholds[0] == 0 and thresholds[-1] == +inf; equal adjacent thresholds
    denote an empty interval (a level that is never selected) and are a
    flagged degenerate state rather than an error.
    """

    thresholds: tuple
    assignment: tuple

    def __post_init__(self):
        thr = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "assignment", tuple(int(i) for i in self.assignment))
        if len(thr) != len(self.assignment) + 1:
            raise ValueError("need exactly one more threshold than intervals")
        if thr[0] != 0.0:
            raise ValueError(f"first threshold must be 0, got {thr[0]}")
        if not math.isinf(thr[-1]):
            raise ValueError(f"last threshold must be +inf, got {thr[-1]}")
        if any(a > b for a, b in zip(thr, thr[1:])):
            raise ValueError(f"thresholds must be non-decreasing: {thr}")
        if sorted(self.assignment) != list(range(len(self.assignment))):
            raise ValueError(f"assignment must be a permutation of 0..M-1: {self.assignment}")

    @property
    def m(self) -> int:
        return len(self.assignment)

    @property
    def empty_intervals(self) -> tuple:
        thr = self.thresholds
        return tuple(thr[i] == thr[i + 1] for i in range(self.m))

    def level_indices(self, x) -> np.ndarray:
        """Owning level index for each energy in x (vectorized)."""
        inner = np.asarray(self.thresholds[1:-1], dtype=float)
        idx = np.searchsorted(inner, np.asarray(x, dtype=float), side="right")
        return np.asarray(self.assignment)[idx]

    def level_index(self, x: float) -> int:
        return int(self.level_indices([x])[0])

    @classmethod
    def single(cls) -> "Partition":
        return cls((0.0, math.inf), (0,))

    @classmethod
    def from_inner_thresholds(cls, inner, assignment=None) -> "Partition":
        inner = tuple(float(t) for t in inner)
        if assignment is None:
            assignment = tuple(range(len(inner) + 1))
        return cls((0.0,) + inner + (math.inf,), assignment)

    @classmethod
    def equiprobable(cls, d: EnergyDistribution, m: int, hyp: int = 0) -> "Partition":
        """Thresholds at the H_hyp quantiles j/m, the standard initializer."""
        if m < 1:
            raise ValueError("m must be >= 1")
        if m == 1:
            return cls.single()
        scale = d.scale(hyp)
        inner = tuple(scale * gamma_quantile(d.shape, j / m) for j in range(1, m))
        return cls.from_inner_thresholds(inner)


@dataclass(frozen=True)
class DistortionParams:
    """Everything the pointwise level score depends on: powers, prices, law."""

    powers: tuple
    lam: float
    mu: float
    scenario: Scenario
    n: int

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if any(p < 0 or not math.isfinite(p) for p in self.powers):
            raise ValueError(f"powers must be finite and >= 0: {self.powers}")
        if self.lam < 0 or self.mu < 0:
            raise ValueError(f"multipliers must be >= 0: lam={self.lam}, mu={self.mu}")
        if self.n < 1:
            raise ValueError("need at least one sensing sample to design a partition")

    @property
    def m(self) -> int:
        return len(self.powers)

    @property
    def dist(self) -> EnergyDistribution:
        return EnergyDistribution.from_scenario(self.scenario, self.n)


def _score_coeffs(dp: DistortionParams):
    """Coefficient pairs (u_i, v_i) of the score against f(x|H0), f(x|H1)."""
    s = dp.scenario
    p = np.asarray(dp.powers)
    u = s.q0 * (np.array([s.rate_h0(pi) for pi in p]) - dp.lam * p)
    v = s.q1 * (np.array([s.rate_h1(pi) for pi in p]) - (dp.lam + dp.mu * s.gamma_) * p)
    return u, v


def distortion(dp: DistortionParams, x: float, i: int) -> float:
    """Pointwise score R(x, P_i) of transmitting at level i when sensing x."""
    if x <= 0.0:
        raise ValueError(f"x must be > 0, got {x}")
    if not 0 <= i < dp.m:
        raise ValueError(f"level index out of range: {i}")
    u, v = _score_coeffs(dp)
    d = dp.dist
    return u[i] * math.exp(log_pdf(d, x, 0)) + v[i] * math.exp(log_pdf(d, x, 1))


def scaled_scores(dp: DistortionParams, x) -> np.ndarray:
    """Score of every level over a grid of x, rescaled by the larger pdf.

    The rescaling exp(-max(L0, L1)) keeps the numbers representable for
    sample counts where the raw pdfs underflow; comparisons between levels
    at one x are unaffected because the factor is shared.
    """
    x = np.asarray(x, dtype=float)
    d = dp.dist
    n = d.shape
    l0 = (n - 1) * np.log(x) - x / d.scale0 - math.lgamma(n) - n * math.log(d.scale0)
    l1 = (n - 1) * np.log(x) - x / d.scale1 - math.lgamma(n) - n * math.log(d.scale1)
    m = np.maximum(l0, l1)
    w0 = np.exp(l0 - m)
    w1 = np.exp(l1 - m)
    u, v = _score_coeffs(dp)
    return w0[:, None] * u[None, :] + w1[:, None] * v[None, :]


def crossing_coefficients(dp: DistortionParams, i: int, k: int):
    """Contrast coefficients (a, b) of S_ik against f(x|H1) and f(x|H0)."""
    u, v = _score_coeffs(dp)
    return v[i] - v[k], u[i] - u[k]


def _crossing_from_coeffs(dp: DistortionParams, a: float, b: float, i: int, k: int):
    d = dp.dist
    s0, s1 = d.scale0, d.scale1
    theta = (s1 - s0) / (s0 * s1)
    if theta < 1e-12 / s0:
        # identical conditional laws: sign of a+b decides globally
        t = a + b
        return None, (i if t >= 0 else k)
    if a == 0.0 and b == 0.0:
        return None, i  # identical levels, incumbent keeps the axis
    if a == 0.0:
        return None, (i if b > 0 else k)
    if b == 0.0:
        return None, (i if a > 0 else k)
    if (a > 0) == (b > 0):
        return None, (i if a > 0 else k)
    x = (math.log(-b / a) + d.shape * math.log(s1 / s0)) / theta
    if x <= 0.0:
        # sign change sits below the support; the large-x side rules
        return None, (i if a > 0 else k)
    return x, None


def _crossing(dp: DistortionParams, i: int, k: int):
    """Root of S_ik, or (None, dominant level) when the sign never changes."""
    a, b = crossing_coefficients(dp, i, k)
    return _crossing_from_coeffs(dp, a, b, i, k)


def crossing_point(dp: DistortionParams, i: int, k: int) -> Optional[float]:
    """Energy where levels i and k swap dominance, or None if one rules everywhere.

    None covers three degenerate shapes: identical levels (S_ik vanishes),
    same-sign contrast coefficients, and a vanishing gain separation
    between the two conditional laws.
    """
    if i == k:
        raise ValueError("crossing_point needs two distinct level indices")
    x, _ = _crossing(dp, i, k)
    return x


def design_partition(dp: DistortionParams) -> Partition:
    """Assign contiguous energy intervals to levels by dominance order.

    Starting from the level that rules the x -> 0+ limit, each step finds
    the nearest crossing against the remaining levels and hands the axis
    over there.  Levels that never win get zero-width intervals, inserted
    so that interval powers stay sorted.
    """
    m = dp.m
    if m == 1:
        return Partition.single()
    d = dp.dist
    u, v = _score_coeffs(dp)
    kappa = math.exp(-d.shape * math.log(d.scale1 / d.scale0))
    limit_score = u + v * kappa

    # ties at the limit go to the larger power
    owner = max(range(m), key=lambda j: (limit_score[j], dp.powers[j]))
    remaining = [j for j in range(m) if j != owner]
    inner: list[float] = []
    placed = [owner]
    while remaining:
        candidates = []
        current = inner[-1] if inner else 0.0
        for k in remaining:
            x, _ = _crossing_from_coeffs(dp, v[owner] - v[k], u[owner] - u[k], owner, k)
            if x is not None and x > current:
                candidates.append((x, k))
        if not candidates:
            break  # current owner dominates every remaining level from here on
        # smallest crossing wins the handover; index breaks exact ties
        x_min, k_min = min(candidates)
        inner.append(x_min)
        placed.append(k_min)
        remaining.remove(k_min)
        owner = k_min

    # levels that never win get zero-width intervals at the high-energy end:
    # the allocation zeroes them (no mass), which keeps interval powers sorted
    dominated = sorted(remaining, key=lambda j: (-dp.powers[j], j))
    thresholds = [0.0] + inner + [math.inf] + [math.inf] * len(dominated)
    assignment = placed + dominated
    return Partition(tuple(thresholds), tuple(assignment))


def average_distortion(dp: DistortionParams, part: Partition) -> float:
    """Partition objective sum_i (u_i p_i0 + v_i p_i1); exact, no quadrature."""
    from .statistics import interval_probs

    p = interval_probs(dp.dist, part)
    u, v = _score_coeffs(dp)
    ua = np.asarray([u[lvl] for lvl in part.assignment])
    va = np.asarray([v[lvl] for lvl in part.assignment])
    return float(np.sum(ua * p[:, 0] + va * p[:, 1]))


def verify_farthest_neighbor(dp: DistortionParams, part: Partition, grid_size: int = 10_000):
    """Check the assignment is pointwise optimal on a quantile-spanning grid.

    Returns (ok, worst_violation) where the violation is measured on the
    rescaled score (shared positive factor removed), with 1e-9 slack.
    """
    d = dp.dist
    lo = min(d.scale0, d.scale1) * gamma_quantile(d.shape, 1e-6)
    hi = max(d.scale0, d.scale1) * gamma_quantile(d.shape, 1.0 - 1e-6)
    grid = np.linspace(lo, hi, grid_size)
    scores = scaled_scores(dp, grid)
    assigned = part.level_indices(grid)
    chosen = scores[np.arange(len(grid)), assigned]
    worst = float(np.max(scores.max(axis=1) - chosen))
    return worst <= 1e-9, worst
