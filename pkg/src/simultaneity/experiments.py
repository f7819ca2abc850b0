"""Monte Carlo harness, distribution distances and figure recipes.

Recipes write plain CSV files plus a gnuplot script that plots them; nothing is
rendered here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from . import twi
from .analytic import ClosedFormDist, PsvCurve, design_twi, pdv_dist
from .config import dump_config
from .errors import ConfigError
from .params import CommConfig, ScenarioConfig, SystemConfig, uniform_links
from .sim import ChannelMode, LinkCounts, iter_blocks


# -- empirical distributions -------------------------------------------------------


class EmpiricalCdf:
    """Right-continuous step cdf of a sample."""

    def __init__(self, samples):
        self.samples = np.sort(np.asarray(samples, dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.samples.size

    def __len__(self):
        return self.n

    def __call__(self, x):
        counts = np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right")
        out = counts / self.n
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, p: float) -> float:
        idx = min(self.n - 1, max(0, math.ceil(p * self.n) - 1))
        return float(self.samples[idx])


def ks_distance(emp: EmpiricalCdf, cdf: Callable) -> float:
    """Kolmogorov-Smirnov statistic, checking both sides of every step."""
    if emp.n < 1:
        raise ValueError("empty sample")
    F = np.asarray(cdf(emp.samples), dtype=float)
    i = np.arange(1, emp.n + 1)
    # with ties, the left limit at a value is the count strictly below it
    below = np.searchsorted(emp.samples, emp.samples, side="left")
    upper = np.max(i / emp.n - F)
    lower = np.max(F - below / emp.n)
    return float(max(upper, lower, 0.0))


def tv_distance(p: Dict, q: Dict) -> float:
    """Total variation distance between two pmfs given as {value: prob}."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical_pmf(values) -> Dict:
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    total = counts.sum()
    return {v.item(): c / total for v, c in zip(vals, counts)}


def wilson_interval(successes, trials, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion (vectorised)."""
    k = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    z = norm.ppf(0.5 + confidence / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = k / n
        denom = 1 + z**2 / n
        centre = (p + z**2 / (2 * n)) / denom
        half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return np.clip(centre - half, 0, 1), np.clip(centre + half, 0, 1)


# -- named scenarios ------------------------------------------------------------

FIGURES = ("fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b")
APPROXIMATION = {
    "fig3a": "comp", "fig3b": "prop",
    "fig4a": "comp", "fig4b": "prop",
    "fig5a": "comp", "fig5b": "prop",
}

# per-figure scenario: v (m/s), (C_min, C_max) s, gamma of every sensor, (M_max, N_max)
_NAMED = {
    "fig3a": (3e8, (0.010, 0.500), 1.0, (5, 5)),
    "fig3b": (300.0, (0.010, 0.100), 1.0, (5, 5)),
    "fig4a": (3e8, (0.010, 0.500), 4.0, (5, 5)),
    "fig4b": (300.0, (0.0, 0.010), 4.0, (5, 5)),
    "fig5a": (3e8, (0.010, 0.500), 4.0, (9, 7)),
    "fig5b": (300.0, (0.0, 0.010), 4.0, (9, 7)),
}

# communication setups swept in the violation-probability figures, (M_max, N_max)
FIG4_COMM_SETUPS = ((2, 2), (3, 3), (5, 5), (9, 7))
# computation-delay bounds (s) swept for the comp-dominated latency figure
FIG5A_SETUPS = ((0.010, 0.100), (0.010, 0.250), (0.010, 0.500), (0.100, 0.500))
# (D_max m, v m/s) swept for the propagation-dominated latency figure
FIG5B_SETUPS = ((100.0, 300.0), (100.0, 343.0), (200.0, 343.0), (500.0, 1500.0), (1000.0, 1500.0))
FIG5_TARGET = 1e-3


def build_named(name: str, *, I: int = 2, M_max: Optional[int] = None, N_max: Optional[int] = None,
                C: Optional[Tuple[float, float]] = None, D_max: float = 100.0,
                v: Optional[float] = None) -> SystemConfig:
    """System for one of the figure scenarios, with optional overrides."""
    if name not in _NAMED:
        raise ConfigError(f"unknown scenario {name!r}; valid names: {', '.join(FIGURES)}")
    v0, C0, gamma, (M0, N0) = _NAMED[name]
    C_min, C_max = C if C is not None else C0
    scenario = ScenarioConfig(t0=0.0, v=v if v is not None else v0, D_max=D_max, I=I,
                              C_min=C_min, C_max=C_max)
    comm = CommConfig(T_f=0.010, M_max=M_max or M0, N_max=N_max or N0, gamma_th_override=1.0)
    return SystemConfig(scenario, comm, uniform_links(I, gamma_override=gamma))


def approximation_for(system: SystemConfig, kind: str) -> ClosedFormDist:
    sc = system.scenario
    return pdv_dist(kind, sc.C_min, sc.C_max, sc.D_max, sc.v, sc.allow_degenerate_comp)


@dataclass
class SweepSpec:
    name: str
    replications: int = 1_000_000
    master_seed: int = 1
    mode: str = ChannelMode.STATISTICAL.value
    threads: int = 1
    W_grid: Optional[Sequence[float]] = None
    target_sigma: Optional[float] = None
    setups: Optional[Sequence] = None
    sensor_counts: Sequence[int] = (2,)


# -- Monte Carlo aggregation ------------------------------------------------------


@dataclass
class PsvEstimate:
    W: np.ndarray
    violations: np.ndarray
    trials: int

    @property
    def sigma(self) -> np.ndarray:
        if self.trials == 0:
            return np.full(self.W.shape, np.nan)
        return self.violations / self.trials

    def interval(self, confidence: float = 0.95):
        return wilson_interval(self.violations, self.trials, confidence)


def empirical_psv(arrival: np.ndarray, W_grid) -> PsvEstimate:
    """Violation frequency per window, counting only the first two arrivals.

    Replications in which nothing arrived are excluded. A replication violates
    at ``W`` when its second arrival is missing or comes more than ``W`` after
    the first. For two sensors this is the full simultaneity-violation event.
    """
    W = np.asarray(W_grid, dtype=float)
    gap = twi.first_two_gap(arrival)
    delivered = ~np.isnan(gap)
    inside = np.sort(gap[delivered & np.isfinite(gap)])
    in_window = np.searchsorted(inside, W, side="right")
    trials = int(delivered.sum())
    return PsvEstimate(W, trials - in_window, trials)


def event_violation_counts(arrival: np.ndarray, W_grid) -> PsvEstimate:
    """Violation frequency per window under the full-event rule of the buffer."""
    W = np.asarray(W_grid, dtype=float)
    finite = np.isfinite(arrival)
    delivered = finite.any(axis=1)
    complete = finite.all(axis=1)
    spread = np.sort(arrival[complete].max(axis=1) - arrival[complete].min(axis=1))
    in_window = np.searchsorted(spread, W, side="right")
    trials = int(delivered.sum())
    return PsvEstimate(W, trials - in_window, trials)


def pdv_samples(arrival: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Replication indices and PDV values for replications with >= 2 survivors."""
    finite = np.isfinite(arrival)
    keep = finite.sum(axis=1) >= 2
    sub = arrival[keep]
    fin = finite[keep]
    hi = np.where(fin, sub, -np.inf).max(axis=1)
    lo = np.where(fin, sub, np.inf).min(axis=1)
    return np.flatnonzero(keep), hi - lo


@dataclass
class LatencyStats:
    W: float
    count: int
    mean: float
    std: float
    mean_first_arrival: float


@dataclass
class MonteCarloResult:
    system: SystemConfig
    replications: int
    master_seed: int
    mode: str
    arrival: np.ndarray
    counts: LinkCounts
    psv: Optional[PsvEstimate] = None
    event_psv: Optional[PsvEstimate] = None
    latency: List[LatencyStats] = field(default_factory=list)

    @property
    def pdv(self) -> EmpiricalCdf:
        return EmpiricalCdf(pdv_samples(self.arrival)[1])

    @property
    def drop_fraction(self) -> np.ndarray:
        return self.counts.drops / self.replications


def latency_stats(arrival: np.ndarray, W: float, t0: float = 0.0) -> LatencyStats:
    lat = twi.first_delivery_latency(arrival, W, t0)
    ok = ~np.isnan(lat)
    first = np.min(arrival[ok], axis=1) - t0 if ok.any() else np.array([np.nan])
    vals = lat[ok]
    return LatencyStats(
        W=float(W),
        count=int(ok.sum()),
        mean=float(vals.mean()) if vals.size else math.nan,
        std=float(vals.std()) if vals.size else math.nan,
        mean_first_arrival=float(first.mean()),
    )


def run_monte_carlo(system: SystemConfig, replications: int, master_seed: int,
                    mode: str = "statistical", W_grid=None, latency_windows: Sequence[float] = (),
                    threads: int = 1) -> MonteCarloResult:
    """Simulate ``replications`` events and aggregate the delivery statistics."""
    counts = LinkCounts()
    parts = []
    for block in iter_blocks(system, ChannelMode(mode), master_seed, replications, threads):
        counts.add(block)
        parts.append(block.arrival)
    arrival = np.concatenate(parts)
    result = MonteCarloResult(system, replications, master_seed, ChannelMode(mode).value, arrival, counts)
    if W_grid is not None:
        result.psv = empirical_psv(arrival, W_grid)
        result.event_psv = event_violation_counts(arrival, W_grid)
    result.latency = [latency_stats(arrival, W, system.scenario.t0) for W in latency_windows]
    return result


# -- file output --------------------------------------------------------------------


def _cell(val) -> str:
    if isinstance(val, (bool, np.bool_)):
        return "1" if val else "0"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return f"{float(val):.9g}"
    return str(val)


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_cell(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


PSV_HEADER = ("W_s", "sigma_analytic", "sigma_frame_sampled", "sigma_empirical", "ci_low", "ci_high")
PDV_HEADER = ("t_s", "cdf_analytic", "cdf_empirical")
DESIGN_HEADER = ("setup_id", "W_star_s", "W_frame_s", "mean_latency_s", "std_latency_s")


def psv_rows(curve: PsvCurve, estimate: PsvEstimate, T_f: float):
    analytic = curve(estimate.W)
    sampled = curve.frame_sampled(estimate.W, T_f)
    lo, hi = estimate.interval()
    return zip(estimate.W, analytic, sampled, estimate.sigma, lo, hi)


def pdv_rows(dist: ClosedFormDist, emp: EmpiricalCdf, grid):
    return zip(grid, dist.cdf(grid), emp(grid))


def _gnuplot(title: str, output: str, xlabel: str, ylabel: str, series: List[str], logy=False) -> str:
    lines = [
        "# gnuplot script; run with: gnuplot <this file>",
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        f"set output '{output}'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key bottom right" if not logy else "set key top right",
        "set grid",
    ]
    if logy:
        lines.append("set logscale y")
    lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


@dataclass
class ReproduceResult:
    name: str
    files: List[Path]
    summary: Dict[str, object]


def _write_summary(path: Path, summary: Dict[str, object]) -> Path:
    return write_csv(path, ("key", "value"), summary.items())


def _psv_grid(dist: ClosedFormDist, T_f: float) -> np.ndarray:
    step = T_f / 10
    top = max(dist.hi, 4 * T_f) * 1.25
    return np.arange(int(math.ceil(top / step)) + 1) * step


def reproduce_figure(spec: SweepSpec, out_dir) -> ReproduceResult:
    """Run one figure recipe and write its CSV files, plot script and summary."""
    name = spec.name
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r}; valid names: {', '.join(FIGURES)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    recipe = {"fig3": _reproduce_pdv, "fig4": _reproduce_psv, "fig5": _reproduce_design}[name[:4]]
    files, summary = recipe(spec, out)
    summary = {"figure": name, "replications": spec.replications, "master_seed": spec.master_seed,
               "mode": spec.mode, "violation_convention": twi.VIOLATION_CONVENTION, **summary}
    files.append(_write_summary(out / f"summary_{name}.csv", summary))
    return ReproduceResult(name, files, summary)


def _reproduce_pdv(spec: SweepSpec, out: Path):
    name = spec.name
    system = build_named(name)
    dist = approximation_for(system, APPROXIMATION[name])
    mc = run_monte_carlo(system, spec.replications, spec.master_seed, spec.mode, threads=spec.threads)
    emp = mc.pdv
    top = max(dist.hi, float(emp.samples[-1]) if emp.n else 0.0)
    grid = np.linspace(0.0, top, 501)
    files = [
        write_csv(out / f"pdv_{name}.csv", PDV_HEADER, pdv_rows(dist, emp, grid)),
        write_text(out / f"config_{name}.txt", dump_config(system)),
        write_text(out / f"plot_{name}.gp", _gnuplot(
            f"PDV cdf, {name}", f"{name}.png", "PDV (s)", "CDF",
            [f"'pdv_{name}.csv' using 1:2 with lines title 'approximation ({dist.label})'",
             f"'pdv_{name}.csv' using 1:3 with steps title 'Monte Carlo'"])),
    ]
    summary = {
        "approximation": dist.label,
        "support_top_s": dist.hi,
        "pdv_samples": emp.n,
        "ks_distance": ks_distance(emp, dist.cdf) if emp.n else math.nan,
        "rho2": system.rho2,
    }
    return files, summary


def _reproduce_psv(spec: SweepSpec, out: Path):
    name = spec.name
    setups = spec.setups or FIG4_COMM_SETUPS
    files, summary, series = [], {}, []
    for I in spec.sensor_counts:
        for M, N in setups:
            system = build_named(name, I=I, M_max=M, N_max=N)
            dist = approximation_for(system, APPROXIMATION[name])
            curve = PsvCurve(dist.label, system.rho2, dist)
            grid = spec.W_grid if spec.W_grid is not None else _psv_grid(dist, system.comm.T_f)
            mc = run_monte_carlo(system, spec.replications, spec.master_seed, spec.mode,
                                 W_grid=grid, threads=spec.threads)
            tag = f"M{M}_N{N}" + ("" if I == 2 else f"_I{I}")
            fname = f"psv_{name}_{tag}.csv"
            files.append(write_csv(out / fname, PSV_HEADER, psv_rows(curve, mc.psv, system.comm.T_f)))
            files.append(write_text(out / f"config_{name}_{tag}.txt", dump_config(system)))
            summary[f"rho2_{tag}"] = system.rho2
            summary[f"drop_fraction_sensor2_{tag}"] = float(mc.drop_fraction[min(1, I - 1)])
            series += [f"'{fname}' using 1:2 with lines title 'analytic {tag}'",
                       f"'{fname}' using 1:3 with steps title 'frame-sampled {tag}'",
                       f"'{fname}' using 1:4 with points pt 7 ps 0.3 title 'Monte Carlo {tag}'"]
    files.append(write_text(out / f"plot_{name}.gp", _gnuplot(
        f"violation probability, {name}", f"{name}.png", "W (s)", "sigma(W)", series, logy=True)))
    return files, summary


def _setup_id(name: str, setup) -> str:
    if name == "fig5a":
        return f"C={setup[0] * 1e3:g}-{setup[1] * 1e3:g}ms"
    return f"P={setup[0]:g}m-{setup[1]:g}mps"


def _reproduce_design(spec: SweepSpec, out: Path):
    name = spec.name
    target = spec.target_sigma if spec.target_sigma is not None else FIG5_TARGET
    setups = spec.setups or (FIG5A_SETUPS if name == "fig5a" else FIG5B_SETUPS)
    rows, files, summary = [], [], {"target_sigma": target}
    for setup in setups:
        if name == "fig5a":
            system = build_named(name, C=setup)
        else:
            system = build_named(name, D_max=setup[0], v=setup[1])
        sid = _setup_id(name, setup)
        dist = approximation_for(system, APPROXIMATION[name])
        design = design_twi(target, system.rho2, dist, system.comm.T_f)
        mc = run_monte_carlo(system, spec.replications, spec.master_seed, spec.mode,
                             W_grid=[design.W_star, design.W_frame],
                             latency_windows=[design.W_frame], threads=spec.threads)
        lat = mc.latency[0]
        rows.append((sid, design.W_star, design.W_frame, lat.mean, lat.std))
        files.append(write_text(out / f"config_{name}_{sid}.txt", dump_config(system)))
        summary[f"rho2_{sid}"] = system.rho2
        summary[f"sigma_empirical_W_star_{sid}"] = float(mc.psv.sigma[0])
        summary[f"sigma_empirical_W_frame_{sid}"] = float(mc.psv.sigma[1])
        summary[f"mean_first_arrival_s_{sid}"] = lat.mean_first_arrival
    fname = f"design_{name}.csv"
    files.insert(0, write_csv(out / fname, DESIGN_HEADER, rows))
    files.append(write_text(out / f"plot_{name}.gp", _gnuplot(
        f"designed window and latency, {name}", f"{name}.png", "setup", "time (s)",
        [f"'{fname}' using 0:3:xtic(1) with linespoints title 'W frame-aligned'",
         f"'{fname}' using 0:4:5 with yerrorbars title 'latency (mean, std)'"])))
    return files, summary
