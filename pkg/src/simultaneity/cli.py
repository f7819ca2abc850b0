"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 domain error, 4 infeasible
design target, 5 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import experiments as ex
from .analytic import PsvCurve, design_twi, psv
from .config import dump_config, load_config
from .errors import ConfigError, DomainError, InfeasibleTargetError
from .sim import ChannelMode, SeedSpec, run_replication, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4, 5

ENV_OUT_DIR = "SIMULTANEITY_OUT_DIR"
ENV_THREADS = "SIMULTANEITY_THREADS"


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (stop inclusive) into an array."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"bad grid {text!r}: need step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + np.arange(n) * step


def _system(args):
    if args.config:
        return load_config(args.config)
    return ex.build_named(args.scenario)


def _points(args) -> np.ndarray:
    if args.grid:
        return parse_grid(args.grid)
    return np.asarray(args.at, dtype=float)


def _emit(rows_header, rows, out: Optional[str]):
    if out:
        ex.write_csv(Path(out), rows_header, rows)
    else:
        sys.stdout.write(",".join(rows_header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(ex._cell(v) for v in row) + "\n")


def cmd_analytic(args) -> int:
    system = _system(args)
    dist = ex.approximation_for(system, args.dist)
    x = _points(args)
    if args.query == "cdf":
        rows, header = zip(x, dist.cdf(x)), ("t_s", "cdf")
    elif args.query == "pdf":
        rows, header = zip(x, dist.pdf(x)), ("t_s", "pdf")
    else:
        rows, header = zip(x, psv(x, system.rho2, dist)), ("W_s", "sigma")
    _emit(header, list(rows), args.out)
    return EXIT_OK


def cmd_design_twi(args) -> int:
    system = _system(args)
    dist = ex.approximation_for(system, args.dist)
    d = design_twi(args.target_sigma, system.rho2, dist, system.comm.T_f, method=args.method)
    fields = [
        ("target_sigma", d.target), ("rho2", d.rho2), ("W_star_s", d.W_star),
        ("W_frame_s", d.W_frame), ("sigma_W_star", d.sigma_star),
        ("sigma_W_frame", d.sigma_frame), ("method", d.method),
    ]
    for key, val in fields:
        print(f"{key} = {ex._cell(val)}")
    if args.out:
        ex.write_csv(Path(args.out), [k for k, _ in fields], [[v for _, v in fields]])
    return EXIT_OK


def cmd_simulate(args) -> int:
    system = _system(args)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    dist = ex.approximation_for(system, args.dist)
    T_f = system.comm.T_f
    if args.W:
        W = np.asarray(args.W, dtype=float)
    elif args.W_grid:
        W = parse_grid(args.W_grid)
    else:
        top = 1.25 * max(dist.hi, T_f)
        W = np.arange(int(np.ceil(top / T_f)) + 1) * T_f
    if np.any(W < 0):
        raise DomainError("window durations must be >= 0")

    mc = ex.run_monte_carlo(system, args.replications, args.seed, args.mode, W_grid=W,
                            latency_windows=[w for w in W if w > 0], threads=args.threads)
    idx, pdv = ex.pdv_samples(mc.arrival)
    ex.write_csv(out / "pdv_samples.csv", ("replication", "pdv_s"), zip(idx, pdv))
    curve = PsvCurve(dist.label, system.rho2, dist)
    ex.write_csv(out / "psv.csv", ex.PSV_HEADER, ex.psv_rows(curve, mc.psv, T_f))
    ex.write_csv(out / "violations.csv", ("W_s", "violations_first_two", "violations_event", "trials"),
                 zip(W, mc.psv.violations, mc.event_psv.violations, [mc.psv.trials] * len(W)))
    ex.write_csv(out / "latency.csv",
                 ("W_s", "deliveries", "mean_latency_s", "std_latency_s", "mean_first_arrival_s"),
                 [(s.W, s.count, s.mean, s.std, s.mean_first_arrival) for s in mc.latency])

    c = mc.counts
    links = system.derived()
    rows = []
    for i, link in enumerate(links):
        rows.append((
            i + 1, c.sr_attempts[i], c.sr_failures[i], c.sr_failures[i] / max(c.sr_attempts[i], 1), link.zeta,
            c.pt_attempts[i], c.pt_failures[i], c.pt_failures[i] / max(c.pt_attempts[i], 1), link.epsilon,
            c.drops[i], c.drops[i] / mc.replications, link.rho, link.false_alarm_rate,
        ))
    ex.write_csv(out / "link_stats.csv", (
        "sensor_id", "sr_attempts", "sr_failures", "zeta_empirical", "zeta_analytic",
        "pt_attempts", "pt_failures", "epsilon_empirical", "epsilon_analytic",
        "drops", "drop_rate_empirical", "drop_rate_analytic",
        # false alarms are not simulated; their analytic per-frame rate is logged only
        "false_alarm_rate_analytic"), rows)

    emp = ex.EmpiricalCdf(pdv)
    summary = {
        "replications": mc.replications, "master_seed": args.seed, "mode": mc.mode,
        "approximation": dist.label, "rho2": system.rho2, "pdv_samples": emp.n,
        "ks_distance": ex.ks_distance(emp, dist.cdf) if emp.n else float("nan"),
        "violation_convention": ex.twi.VIOLATION_CONVENTION,
    }
    ex.write_csv(out / "summary.csv", ("key", "value"), summary.items())
    ex.write_text(out / "resolved_config.txt", dump_config(system))

    if args.trace:
        trace: list = []
        for r in range(min(args.trace, args.replications)):
            run_replication(system, args.mode, SeedSpec(args.seed, r), trace=trace)
        try:
            write_trace(trace, out / "trace.csv")
        except OSError as exc:
            raise OSError(f"cannot write {out / 'trace.csv'}: {exc.strerror or exc}") from exc
    print(f"wrote results for {mc.replications} replications to {out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    spec = ex.SweepSpec(
        name=args.figure, replications=args.replications, master_seed=args.seed,
        mode=args.mode, threads=args.threads, target_sigma=args.target_sigma,
        sensor_counts=tuple(args.sensor_counts),
    )
    result = ex.reproduce_figure(spec, Path(args.out_dir))
    for path in result.files:
        print(path)
    return EXIT_OK


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def build_parser() -> argparse.ArgumentParser:
    env_threads = os.environ.get(ENV_THREADS)
    default_threads = int(env_threads) if env_threads else 1
    default_out = os.environ.get(ENV_OUT_DIR, "results")

    source = argparse.ArgumentParser(add_help=False)
    group = source.add_mutually_exclusive_group()
    group.add_argument("--config", help="key = value config file")
    group.add_argument("--scenario", default="fig3a", choices=ex.FIGURES,
                       help="built-in scenario (default: fig3a)")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--replications", type=_positive_int, default=1_000_000)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--mode", choices=[m.value for m in ChannelMode], default="statistical")
    run.add_argument("--threads", type=_positive_int, default=default_threads,
                     help=f"worker threads (env {ENV_THREADS}); output does not depend on it")
    run.add_argument("--out-dir", default=default_out, help=f"output directory (env {ENV_OUT_DIR})")

    parser = argparse.ArgumentParser(
        prog="simultaneity",
        description="Delay statistics and window design for event-driven sensor updates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", parents=[source], help="evaluate PDV approximations or sigma(W)")
    p.add_argument("--dist", choices=["comp", "prop"], default="comp")
    p.add_argument("--query", choices=["cdf", "pdf", "psv"], default="cdf")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--at", type=float, nargs="+", help="evaluation points (s)")
    where.add_argument("--grid", help="start:stop:step in seconds")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("design-twi", parents=[source], help="window duration for a target sigma")
    p.add_argument("--target-sigma", type=float, required=True)
    p.add_argument("--dist", choices=["comp", "prop"], default="comp")
    p.add_argument("--method", choices=["auto", "closed_form", "bisection"], default="auto")
    p.add_argument("--out", help="also write a one-row CSV here")
    p.set_defaults(func=cmd_design_twi)

    p = sub.add_parser("simulate", parents=[source, run], help="Monte Carlo run with CSV output")
    p.add_argument("--dist", choices=["comp", "prop"], default="comp",
                   help="approximation used for the analytic columns")
    wgroup = p.add_mutually_exclusive_group()
    wgroup.add_argument("--W", type=float, nargs="+", help="window durations (s)")
    wgroup.add_argument("--W-grid", help="start:stop:step in seconds")
    p.add_argument("--trace", type=int, default=0, metavar="N",
                   help="write a per-frame trace of the first N replications")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", parents=[run], help="regenerate a figure's data files")
    p.add_argument("figure", choices=ex.FIGURES)
    p.add_argument("--target-sigma", type=float, default=None, help="fig5 design target")
    p.add_argument("--sensor-counts", type=_positive_int, nargs="+", default=[2],
                   help="fig4 sensor populations")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleTargetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
