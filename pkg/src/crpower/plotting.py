"""Figure rendering for CLI reports.

Every figure is derived from the same numbers that land in the delimited
or JSON output; the files are a convenience view, the tables stay the
canonical artifact.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .optimizer import SolveReport, baseline_underlay
from .scenario import Scenario, sample_count
from .statistics import EnergyDistribution, gamma_quantile

_RC = {
    "figure.figsize": (7.0, 4.4),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.35,
    "legend.fontsize": 9,
}


def _axes():
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
    return fig, ax


def save_policy_figure(s: Scenario, report: SolveReport, path) -> str:
    """Step plot of the transmit power versus received energy."""
    pol = report.policy
    fig, ax = _axes()
    n = sample_count(s, pol.tau)
    if pol.m > 1 and n >= 1:
        d = EnergyDistribution.from_scenario(s, n)
        lo = min(d.scale0, d.scale1) * gamma_quantile(n, 1e-4)
        hi = max(d.scale0, d.scale1) * gamma_quantile(n, 1.0 - 1e-4)
    else:
        lo, hi = 0.0, 1.0
    thr = list(pol.partition.thresholds)
    edges = [max(lo, thr[0])] + [t for t in thr[1:-1]] + [hi]
    for j, p in enumerate(pol.powers):
        a, b = edges[j], edges[j + 1]
        if b <= a:
            continue
        ax.hlines(p, a, b, lw=2.2, color="C0")
    for t in thr[1:-1]:
        if math.isfinite(t) and lo < t < hi:
            ax.axvline(t, color="C0", ls=":", lw=0.8, alpha=0.6)
    under = baseline_underlay(s)
    ax.hlines(
        under.policy.powers[0], lo, hi, lw=1.6, color="C3", ls="--", label="underlay power"
    )
    ax.set_xlabel("received energy")
    ax.set_ylabel("transmit power (linear)")
    ax.set_title(f"{pol.provenance} policy, M={pol.m}, tau={pol.tau:g} s")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def save_sweep_figure(rows, axis: str, path) -> str:
    """Rate curves per strategy over the sweep axis."""
    fig, ax = _axes()
    strategies = sorted({r["strategy"] for r in rows})
    for st in strategies:
        pts = [(float(r["value"]), r["rate"]) for r in rows if r["strategy"] == st and r["status"] == "ok"]
        if not pts:
            continue
        xs, ys = zip(*sorted(pts))
        ax.plot(xs, ys, marker="o", ms=4, label=st)
    if axis == "p_avg":
        ax.set_xscale("log")
        ax.set_xlabel("average power budget (linear)")
    elif axis == "m":
        ax.set_xlabel("number of power levels M")
    else:
        ax.set_xlabel("sensing time (s)")
    ax.set_ylabel("rate (bits/s/Hz)")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def save_simulation_figure(analytic: np.ndarray, result, path) -> str:
    """Empirical versus analytic per-interval selection frequencies."""
    fig, ax = _axes()
    p = np.asarray(analytic)
    freq = np.asarray(result.level_freq)
    m = p.shape[0]
    idx = np.arange(m)
    width = 0.2
    for j, name in enumerate(("idle", "busy")):
        ax.bar(idx + (j - 0.5) * 2 * width, p[:, j], width, label=f"analytic | {name}", alpha=0.85)
        ax.bar(
            idx + (j - 0.5) * 2 * width + width / 2,
            freq[:, j],
            width / 2,
            label=f"empirical | {name}",
            color="k",
            alpha=0.5,
        )
    ax.set_xticks(idx)
    ax.set_xlabel("energy interval")
    ax.set_ylabel("selection probability")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)
