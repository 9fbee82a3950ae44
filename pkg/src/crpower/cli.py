"""Command-line interface: optimize | sweep | simulate.

Reports are JSON documents, sweeps are CSV tables (one commented manifest
line, then a documented header); both embed the run manifest so reruns
are attributable and reproducible.  When an output path is given the
report path also renders matplotlib figures next to the tables unless
--no-plot is passed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .montecarlo import SimConfig, simulate
from .optimizer import (
    STRATEGIES,
    SolveReport,
    evaluate_metrics,
    PowerPolicy,
    solve_strategy,
    sweep,
)
from .partition import Partition
from .scenario import ConfigError, Scenario, SensingConfig, scenario_from_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_IO = 3

_SWEEP_COLUMNS = [
    ("axis", "sweep axis name"),
    ("value", "axis value (linear units; m is a count, tau in seconds)"),
    ("strategy", "one of " + "|".join(STRATEGIES)),
    ("m", "number of power levels in the returned policy"),
    ("tau_star_s", "selected sensing time, seconds"),
    ("rate_bits_per_s_hz", "average achievable rate"),
    ("avg_power_linear", "average transmit power, linear units"),
    ("avg_interference_linear", "average interference at the primary receiver"),
    ("dual_gap", "dual value minus primal rate at the returned policy"),
    ("status", "ok or error: message"),
]


def _parse_tau_grid(text: str, s: Scenario) -> SensingConfig:
    """A single integer >= 2 is a uniform point count; otherwise a comma list of seconds."""
    text = text.strip()
    if "," not in text and "." not in text and "e" not in text.lower():
        try:
            n = int(text)
        except ValueError:
            raise ConfigError(f"cannot parse tau grid {text!r}")
        if n >= 2:
            return SensingConfig.uniform(s, n).validated(s)
        return SensingConfig((float(n),)).validated(s)
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse tau grid {text!r}")
    return SensingConfig(values).validated(s)


def _thresholds_out(thresholds):
    return [("+inf" if math.isinf(t) else t) for t in thresholds]


def _thresholds_in(raw):
    out = []
    for t in raw:
        if t == "+inf":
            out.append(math.inf)
        else:
            out.append(float(t))
    return out


def _manifest(command: str, args, s: Scenario, elapsed: float, extra=None) -> dict:
    man = {
        "command": command,
        "artifact_version": __version__,
        "scenario": s.to_dict(),
        "seed": getattr(args, "seed", None),
        "tolerances": {
            "lloyd_tol": getattr(args, "lloyd_tol", None),
            "feas_tol": getattr(args, "feas_tol", None),
            "slack_tol": getattr(args, "slack_tol", None),
            "dual_cap": getattr(args, "dual_cap", None),
            "lloyd_cap": getattr(args, "lloyd_cap", None),
        },
        "elapsed_s": elapsed,
    }
    if extra:
        man.update(extra)
    return man


def _policy_doc(pol: PowerPolicy) -> dict:
    return {
        "provenance": pol.provenance,
        "tau": pol.tau,
        "m": pol.m,
        "thresholds": _thresholds_out(pol.partition.thresholds),
        "assignment": list(pol.partition.assignment),
        "powers": list(pol.powers),
    }


def _policy_from_doc(doc: dict) -> PowerPolicy:
    part = Partition(tuple(_thresholds_in(doc["thresholds"])), tuple(doc["assignment"]))
    return PowerPolicy(float(doc["tau"]), part, tuple(doc["powers"]), doc["provenance"])


def _report_doc(rep: SolveReport, manifest: dict) -> dict:
    return {
        "manifest": manifest,
        "scenario": rep.scenario.to_dict(),
        "policy": _policy_doc(rep.policy),
        "results": {
            "rate": rep.rate,
            "avg_power": rep.avg_power,
            "avg_interference": rep.avg_interference,
            "dual_gap": rep.dual_gap,
            "lam": rep.lam,
            "mu": rep.mu,
            "lloyd_iterations": rep.lloyd_iterations,
            "converged": rep.converged,
        },
        "tau_trace": [
            [t, (None if r is None or (isinstance(r, float) and math.isnan(r)) else r), e]
            for t, r, e in rep.tau_trace
        ],
    }


def _dual_kwargs(args) -> dict:
    return {
        "feas_tol": args.feas_tol,
        "slack_tol": args.slack_tol,
        "max_iter": args.dual_cap,
    }


def _write_json(doc: dict, out_path):
    text = json.dumps(doc, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_optimize(args) -> int:
    s = scenario_from_config(args.config)
    cfg = _parse_tau_grid(args.tau_grid, s)
    strategy = args.strategy[0] if args.strategy else "proposed"
    kwargs = dict(target_pd=args.target_pd, **_dual_kwargs(args))
    if strategy == "proposed":
        kwargs.update(m=args.m, lloyd_tol=args.lloyd_tol, max_outer=args.lloyd_cap)
    t0 = time.perf_counter()
    rep = solve_strategy(s, strategy, cfg, **kwargs)
    elapsed = time.perf_counter() - t0
    man = _manifest(
        "optimize", args, s, elapsed,
        {"m": args.m or s.m, "tau_grid": list(cfg.tau_grid), "target_pd": args.target_pd},
    )
    doc = _report_doc(rep, man)
    _write_json(doc, args.out)
    if args.out and not args.no_plot:
        from .plotting import save_policy_figure

        fig_path = _sibling(args.out, "_policy.png")
        save_policy_figure(s, rep, fig_path)
        print(f"figure: {fig_path}", file=sys.stderr)
    print(
        f"tau*={rep.policy.tau:g}s  rate={rep.rate:.6f}  power={rep.avg_power:.6f}"
        f"  interference={rep.avg_interference:.6f}  converged={rep.converged}",
        file=sys.stderr,
    )
    return EXIT_OK if rep.converged else EXIT_RUNTIME


def _sibling(out_path: str, suffix: str) -> str:
    stem = out_path
    for ext in (".json", ".csv", ".txt"):
        if stem.endswith(ext):
            stem = stem[: -len(ext)]
            break
    return stem + suffix


def cmd_sweep(args) -> int:
    s = scenario_from_config(args.config)
    cfg = _parse_tau_grid(args.tau_grid, s)
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    if not values:
        raise ConfigError("sweep needs a non-empty --values list")
    strategies = args.strategy or list(STRATEGIES)
    t0 = time.perf_counter()
    rows = sweep(
        s,
        args.axis,
        values,
        strategies,
        cfg,
        m=args.m,
        target_pd=args.target_pd,
        lloyd_tol=args.lloyd_tol,
        max_outer=args.lloyd_cap,
        **_dual_kwargs(args),
    )
    elapsed = time.perf_counter() - t0
    man = _manifest(
        "sweep", args, s, elapsed,
        {
            "axis": args.axis,
            "values": values,
            "strategies": strategies,
            "m": args.m or s.m,
            "tau_grid": list(cfg.tau_grid),
            "target_pd": args.target_pd,
        },
    )
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(man) + "\n")
    buf.write("# columns: " + "; ".join(f"{n}={d}" for n, d in _SWEEP_COLUMNS) + "\n")
    writer = csv.writer(buf)
    writer.writerow([n for n, _ in _SWEEP_COLUMNS])
    for r in rows:
        writer.writerow(
            [
                r["axis"],
                repr(float(r["value"])),
                r["strategy"],
                "" if r["m"] is None else r["m"],
                "" if r["tau_star"] is None else repr(float(r["tau_star"])),
                "" if r["rate"] is None else repr(float(r["rate"])),
                "" if r["avg_power"] is None else repr(float(r["avg_power"])),
                "" if r["avg_interference"] is None else repr(float(r["avg_interference"])),
                "" if r["dual_gap"] is None else repr(float(r["dual_gap"])),
                r["status"],
            ]
        )
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        if not args.no_plot:
            from .plotting import save_sweep_figure

            fig_path = _sibling(args.out, ".png")
            save_sweep_figure(rows, args.axis, fig_path)
            print(f"figure: {fig_path}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    failures = [r for r in rows if r["status"] != "ok"]
    print(f"sweep: {len(rows)} rows, {len(failures)} failed cells", file=sys.stderr)
    return EXIT_OK if not failures else EXIT_RUNTIME


def cmd_simulate(args) -> int:
    s = scenario_from_config(args.config)
    try:
        with open(args.policy, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        policy = _policy_from_doc(doc["policy"])
        policy_scenario = Scenario.from_dict(doc["scenario"])
    except FileNotFoundError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise PolicyDocError(f"malformed policy document {args.policy}: {exc}") from exc
    if policy_scenario != s:
        raise PolicyDocError(
            "scenario mismatch: the policy document was optimized for different parameters"
        )
    cfg = SimConfig(frames=args.frames, seed=args.seed, mode=args.mode)
    t0 = time.perf_counter()
    result = simulate(s, policy, cfg)
    elapsed = time.perf_counter() - t0
    rate, power, interference = evaluate_metrics(s, policy)

    def in_se(delta, se):
        return abs(delta) / se if se > 0 else (0.0 if delta == 0 else math.inf)

    deltas = {
        "rate": in_se(result.rate_mean - rate, result.rate_se),
        "power": in_se(result.power_mean - power, result.power_se),
        "interference": in_se(result.interference_mean - interference, result.interference_se),
    }
    man = _manifest(
        "simulate", args, s, elapsed,
        {"frames": args.frames, "mode": args.mode, "policy_path": str(args.policy)},
    )
    out_doc = {
        "manifest": man,
        "scenario": s.to_dict(),
        "policy": _policy_doc(policy),
        "analytic": {"rate": rate, "avg_power": power, "avg_interference": interference},
        "simulation": result.to_dict(),
        "deltas_in_se": deltas,
    }
    _write_json(out_doc, args.out)
    if args.out and not args.no_plot:
        from .optimizer import policy_probs
        from .plotting import save_simulation_figure

        fig_path = _sibling(args.out, "_levels.png")
        save_simulation_figure(policy_probs(s, policy), result, fig_path)
        print(f"figure: {fig_path}", file=sys.stderr)
    print(
        "deltas (SE units): "
        + "  ".join(f"{k}={v:.2f}" for k, v in deltas.items()),
        file=sys.stderr,
    )
    return EXIT_OK


class PolicyDocError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crpower",
        description="Multi-level transmit-power policies for a cognitive-radio secondary user",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON scenario config path")
        p.add_argument("--out", default=None, help="output file (stdout when omitted)")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
        p.add_argument("--m", type=int, default=None, help="override the number of power levels")
        p.add_argument(
            "--tau-grid",
            default="51",
            help="integer >= 2: uniform point count over [0, T]; otherwise comma list of seconds",
        )
        p.add_argument("--target-pd", type=float, default=0.9, help="detection probability for osa/binary")
        p.add_argument("--lloyd-tol", type=float, default=1e-8, help="relative stall tolerance of the alternation")
        p.add_argument("--lloyd-cap", type=int, default=200, help="max alternation iterations")
        p.add_argument("--feas-tol", type=float, default=1e-7, help="relative constraint violation tolerance")
        p.add_argument("--slack-tol", type=float, default=1e-9, help="relative complementary-slackness tolerance")
        p.add_argument("--dual-cap", type=int, default=100_000, help="max dual iterations")
        p.add_argument("--seed", type=int, default=0, help="random seed (simulate)")

    p_opt = sub.add_parser("optimize", help="solve one scenario and emit the policy report")
    common(p_opt)
    p_opt.add_argument(
        "--strategy", action="append", choices=STRATEGIES, default=None,
        help="strategy to solve (default proposed; first occurrence wins)",
    )
    p_opt.set_defaults(func=cmd_optimize)

    p_sweep = sub.add_parser("sweep", help="sweep an axis and emit a plot-ready table")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=("p_avg", "m", "tau"))
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument(
        "--strategy", action="append", choices=STRATEGIES, default=None,
        help="strategy to include (repeatable; default all)",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_sim = sub.add_parser("simulate", help="Monte Carlo validation of an emitted policy")
    common(p_sim)
    p_sim.add_argument("--policy", required=True, help="policy report emitted by optimize")
    p_sim.add_argument("--frames", type=int, default=100_000)
    p_sim.add_argument("--mode", choices=("direct-energy", "sample-level"), default="direct-energy")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_CONFIG if getattr(exc, "filename", None) == getattr(args, "config", None) else EXIT_IO
    except PolicyDocError as exc:
        print(f"policy error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
