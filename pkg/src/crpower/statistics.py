"""Gamma statistics of the accumulated-energy detection variable.

The sensing statistic is a sum of n squared complex-Gaussian sample
magnitudes, hence Gamma(shape=n, scale=N0) when the primary is idle and
Gamma(shape=n, scale=N0+g1*Pp) when it is busy.  Everything here is kept
log-domain safe for shapes up to 1e5, where Gamma(n) overflows any float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - annotation only, avoids an import cycle
    from .partition import Partition
    from .scenario import Scenario

LOG2E = math.log2(math.e)

_HALF_LN_2PI = 0.5 * math.log(2.0 * math.pi)
_MAX_ITER = 10**6
# per-step stall tolerance; the slow geometric tail near x ~ shape inflates
# the truncation error by up to ~sqrt(shape), so this sits well below the
# 1e-12 absolute target
_STEP_TOL = 1e-16


class ConvergenceError(RuntimeError):
    """A series, continued fraction or bisection failed to converge."""


@dataclass(frozen=True)
class EnergyDistribution:
    """Conditional laws of the detection statistic: Gamma(shape, scale_j)."""

    shape: int
    scale0: float
    scale1: float

    def __post_init__(self):
        if not (isinstance(self.shape, int) and self.shape >= 1):
            raise ValueError(f"shape must be an integer >= 1, got {self.shape!r}")
        if not (0.0 < self.scale0 <= self.scale1):
            raise ValueError(
                f"need 0 < scale0 <= scale1, got {self.scale0!r}, {self.scale1!r}"
            )

    @classmethod
    def from_scenario(cls, s: "Scenario", n: int) -> "EnergyDistribution":
        return cls(shape=n, scale0=s.n0, scale1=s.n0 + s.g1 * s.pp)

    def scale(self, hyp: int) -> float:
        return self.scale1 if hyp else self.scale0

    def mean(self, hyp: int) -> float:
        return self.shape * self.scale(hyp)

    def std(self, hyp: int) -> float:
        return math.sqrt(self.shape) * self.scale(hyp)


def log_pdf(d: EnergyDistribution, x: float, hyp: int) -> float:
    """ln f(x | H_hyp) for x > 0, computed entirely in the log domain."""
    if x <= 0.0:
        raise ValueError(f"x must be > 0, got {x}")
    n, s = d.shape, d.scale(hyp)
    return (n - 1) * math.log(x) - x / s - math.lgamma(n) - n * math.log(s)


def _log1pmx(u: float) -> float:
    """log(1+u) - u without cancellation near u = 0."""
    if abs(u) > 0.35:
        return math.log1p(u) - u
    # series -u^2/2 + u^3/3 - u^4/4 + ...; |u| <= 0.35 needs < 45 terms
    term = u
    sign = -1.0
    total = 0.0
    for k in range(2, 64):
        term *= u
        inc = sign * term / k
        total += inc
        sign = -sign
        if abs(inc) < 1e-18 * max(abs(total), 1e-300):
            break
    return total


def _stirling_err(a: float) -> float:
    """lgamma(a) - [(a-1/2)ln a - a + ln(2*pi)/2], for a >= 20."""
    inv2 = 1.0 / (a * a)
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - inv2 / 1680.0) * inv2) * inv2) / a


def _log_gamma_fac(a: float, x: float) -> float:
    """ln(x^a e^-x / Gamma(a)), stable for large a where the terms cancel."""
    if a < 20.0:
        return a * math.log(x) - x - math.lgamma(a)
    u = (x - a) / a
    return a * _log1pmx(u) + 0.5 * math.log(a) - _HALF_LN_2PI - _stirling_err(a)


def _lower_series(a: float, x: float) -> float:
    """P(a, x) by power series; relatively accurate, for x < a + 1."""
    fac = math.exp(_log_gamma_fac(a, x))
    if fac == 0.0:
        return 0.0
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _STEP_TOL:
            return total * fac
    raise ConvergenceError(f"lower-gamma series stalled at a={a}, x={x}")


def _upper_cf(a: float, x: float) -> float:
    """Q(a, x) by modified Lentz continued fraction; for x >= a + 1."""
    fac = math.exp(_log_gamma_fac(a, x))
    if fac == 0.0:
        return 0.0
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _STEP_TOL:
            return h * fac
    raise ConvergenceError(f"upper-gamma continued fraction stalled at a={a}, x={x}")


def reg_lower_gamma(shape: float, x: float) -> float:
    """Regularized lower incomplete gamma P(shape, x), in [0, 1].

    Series representation below shape+1, continued fraction above; both
    are relatively accurate in their tail, so differences of this function
    (and of its complement) resolve interval probabilities down to the
    underflow limit.
    """
    if shape <= 0.0:
        raise ValueError(f"shape must be > 0, got {shape}")
    if x < 0.0:
        raise ValueError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < shape + 1.0:
        return min(_lower_series(shape, x), 1.0)
    return max(1.0 - _upper_cf(shape, x), 0.0)


def _reg_upper_gamma(shape: float, x: float) -> float:
    """Complement Q(shape, x) = 1 - P(shape, x), relatively accurate for large x."""
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < shape + 1.0:
        return max(1.0 - _lower_series(shape, x), 0.0)
    return min(_upper_cf(shape, x), 1.0)


def gamma_interval_prob(shape: float, x_lo: float, x_hi: float) -> float:
    """Pr(x_lo <= X < x_hi) for X ~ Gamma(shape, 1).

    Uses whichever tail representation keeps the difference relatively
    accurate, so deep-tail intervals come out as tiny positive numbers
    instead of cancelling to zero.
    """
    if x_hi <= x_lo:
        return 0.0
    split = shape + 1.0
    if x_hi < split:
        p = _lower_series(shape, x_hi) - (0.0 if x_lo == 0.0 else _lower_series(shape, x_lo))
    elif x_lo >= split:
        p = _reg_upper_gamma(shape, x_lo) - _reg_upper_gamma(shape, x_hi)
    else:
        p = reg_lower_gamma(shape, x_hi) - reg_lower_gamma(shape, x_lo)
    return min(max(p, 0.0), 1.0)


def interval_probs(d: EnergyDistribution, part: "Partition") -> np.ndarray:
    """Matrix p[i, j] = Pr(x in interval i | H_j) for a threshold partition.

    Columns sum to one up to rounding; zero rows flag empty intervals.
    """
    thr = np.asarray(part.thresholds, dtype=float)
    out = np.empty((len(thr) - 1, 2))
    for j, scale in enumerate((d.scale0, d.scale1)):
        edges = thr / scale
        for i in range(len(thr) - 1):
            out[i, j] = gamma_interval_prob(d.shape, edges[i], edges[i + 1])
    return out


def log_likelihood_ratio(d: EnergyDistribution, x: float) -> float:
    """ln[f(x|H1)/f(x|H0)]; strictly increasing in x when scale1 > scale0."""
    if x <= 0.0:
        raise ValueError(f"x must be > 0, got {x}")
    s0, s1 = d.scale0, d.scale1
    return x * (s1 - s0) / (s0 * s1) + d.shape * math.log(s0 / s1)


def gamma_quantile(shape: float, prob: float, tol: float = 1e-12) -> float:
    """Inverse of reg_lower_gamma in x, by bisection on a safe bracket."""
    if not (0.0 < prob < 1.0):
        raise ValueError(f"prob must be in (0, 1), got {prob}")
    hi = shape + 40.0 * math.sqrt(shape) + 40.0
    while reg_lower_gamma(shape, hi) < prob:
        hi *= 2.0
        if hi > 1e300:
            raise ConvergenceError(f"quantile bracket blew up at shape={shape}, prob={prob}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if reg_lower_gamma(shape, mid) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1.0):
            return 0.5 * (lo + hi)
    raise ConvergenceError(
        f"quantile bisection stalled at shape={shape}, prob={prob}, bracket=({lo}, {hi})"
    )


def detection_threshold(d: EnergyDistribution, target_pd: float) -> float:
    """Energy threshold rho with Pr(x > rho | H1) = target_pd."""
    if not (0.0 < target_pd < 1.0):
        raise ValueError(f"target_pd must be in (0, 1), got {target_pd}")
    return d.scale1 * gamma_quantile(d.shape, 1.0 - target_pd, tol=1e-12)
