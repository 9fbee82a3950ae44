"""Frame-level Monte Carlo validation of a power policy.

Each frame independently draws the primary state, then the sensing energy
either directly from the matching Gamma law ("direct-energy", exact in
distribution and cheap at any sample count) or by summing squared
complex-Gaussian samples ("sample-level", a model-level cross-check kept
for small sample counts).  Frames are generated in fixed-size blocks with
a Philox counter-based generator keyed by (seed, block index), so results
are reproducible and independent of how blocks would be sharded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .optimizer import PowerPolicy, policy_probs
from .scenario import Scenario, sample_count

MODES = ("direct-energy", "sample-level")


@dataclass(frozen=True)
class SimConfig:
    frames: int
    seed: int = 0
    mode: str = "direct-energy"
    sample_cap: int = 10_000
    block: int = 8192

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.block < 1:
            raise ValueError("block must be >= 1")


@dataclass
class SimResult:
    frames: int
    rate_mean: float
    rate_se: float
    power_mean: float
    power_se: float
    interference_mean: float
    interference_se: float
    level_freq: np.ndarray  # (M, 2) selection frequency given H0 / H1
    hyp_counts: tuple  # frames observed under (H0, H1)

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "rate_mean": self.rate_mean,
            "rate_se": self.rate_se,
            "power_mean": self.power_mean,
            "power_se": self.power_se,
            "interference_mean": self.interference_mean,
            "interference_se": self.interference_se,
            "level_freq": [list(row) for row in np.asarray(self.level_freq)],
            "hyp_counts": list(self.hyp_counts),
        }


def _block_rng(seed: int, block_index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(block_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sample_energies(rng, busy: np.ndarray, n: int, s: Scenario, chunk_cap: int) -> np.ndarray:
    """Per-frame accumulated energy from explicit complex baseband samples."""
    total = len(busy)
    x = np.empty(total)
    start = 0
    rows = max(1, chunk_cap // max(n, 1))
    while start < total:
        stop = min(start + rows, total)
        cnt = stop - start
        noise = rng.normal(0.0, math.sqrt(s.n0 / 2.0), size=(cnt, n, 2))
        sig = rng.normal(0.0, math.sqrt(s.pp / 2.0), size=(cnt, n, 2))
        r = noise + math.sqrt(s.g1) * sig * busy[start:stop, None, None]
        x[start:stop] = np.sum(r * r, axis=(1, 2))
        start = stop
    return x


def simulate(s: Scenario, pol: PowerPolicy, cfg: SimConfig) -> SimResult:
    """Estimate rate, spent power and caused interference of a policy."""
    n = sample_count(s, pol.tau)
    if pol.m > 1 and n < 1:
        raise ValueError("cannot simulate a multi-level policy without sensing samples")
    if cfg.mode == "sample-level" and n > cfg.sample_cap:
        raise ValueError(
            f"sample-level mode is capped at n <= {cfg.sample_cap}, policy needs n = {n}"
        )
    frac = (s.frame_t - pol.tau) / s.frame_t
    powers = np.asarray(pol.powers)
    r0 = np.array([s.rate_h0(p) for p in powers])
    r1 = np.array([s.rate_h1(p) for p in powers])
    inner = np.asarray(pol.partition.thresholds[1:-1], dtype=float)

    sums = np.zeros(3)  # rate, power, interference
    sumsq = np.zeros(3)
    counts = np.zeros((pol.m, 2), dtype=np.int64)
    hyp_counts = np.zeros(2, dtype=np.int64)

    done = 0
    block_index = 0
    while done < cfg.frames:
        nb = min(cfg.block, cfg.frames - done)
        rng = _block_rng(cfg.seed, block_index)
        busy = (rng.random(nb) >= s.q0).astype(float)  # 1 when the primary transmits
        if pol.m == 1 and n == 0:
            level = np.zeros(nb, dtype=int)
        else:
            if cfg.mode == "direct-energy":
                scale = np.where(busy > 0, s.n0 + s.g1 * s.pp, s.n0)
                x = rng.gamma(shape=float(n), scale=scale)
            else:
                x = _sample_energies(rng, busy, n, s, chunk_cap=2**21)
            # interval index; emitted policies carry one power per interval
            level = np.searchsorted(inner, x, side="right")

        rate = frac * np.where(busy > 0, r1[level], r0[level])
        power = frac * powers[level]
        interference = frac * s.gamma_ * powers[level] * busy

        for i, arr in enumerate((rate, power, interference)):
            sums[i] += float(arr.sum())
            sumsq[i] += float(np.dot(arr, arr))
        h_idx = (busy > 0).astype(int)
        np.add.at(counts, (level, h_idx), 1)
        hyp_counts += np.bincount(h_idx, minlength=2)
        done += nb
        block_index += 1

    N = cfg.frames
    means = sums / N
    if N > 1:
        var = np.maximum(sumsq - N * means**2, 0.0) / (N - 1)
        ses = np.sqrt(var / N)
    else:
        ses = np.zeros(3)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq = counts / np.maximum(hyp_counts[None, :], 1)
    return SimResult(
        frames=N,
        rate_mean=float(means[0]),
        rate_se=float(ses[0]),
        power_mean=float(means[1]),
        power_se=float(ses[1]),
        interference_mean=float(means[2]),
        interference_se=float(ses[2]),
        level_freq=freq,
        hyp_counts=(int(hyp_counts[0]), int(hyp_counts[1])),
    )


def level_frequencies_check(result: SimResult, p: np.ndarray) -> float:
    """Largest |empirical - analytic| interval probability over all cells."""
    p = np.asarray(p, dtype=float)
    freq = np.asarray(result.level_freq)
    if freq.shape != p.shape:
        raise ValueError(f"shape mismatch: frequencies {freq.shape} vs probabilities {p.shape}")
    return float(np.max(np.abs(freq - p)))
