"""Acceptance criteria, one test per criterion.

Each test records a pass/fail line that is printed in the terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import binom

from simultaneity.analytic import (
    abs_diff_oracle,
    access_delay_pmf,
    comp_pdv_dist,
    design_twi,
    invert_comp_closed_form,
    invert_psv_bisection,
    prop_pdv_dist,
    psv,
    scaled_distance_pdf,
    uniform_pdf,
)
from simultaneity.cli import main
from simultaneity.experiments import (
    approximation_for,
    build_named,
    empirical_pmf,
    ks_distance,
    run_monte_carlo,
    tv_distance,
)
from simultaneity.params import CommConfig, ScenarioConfig, SystemConfig, uniform_links
from simultaneity.sim import BLOCK_SIZE, ChannelMode, count_links, pt_successes, simulate_batch, sr_successes
from simultaneity.twi import event_violations, first_delivery_latency, ingest

pytestmark = pytest.mark.slow


def test_drop_rate_reproduction(criterion, fig5a):
    n = 10_000_000
    rho = fig5a.rho2
    tic = time.perf_counter()
    counts = count_links(fig5a, "statistical", 2024, n)
    elapsed = time.perf_counter() - tic
    lo, hi = binom.interval(0.99, n, rho)
    drops = int(counts.drops[1])
    ok = f"{rho:.0e}" == "7e-05" and lo <= drops <= hi and elapsed <= 300
    criterion(1, "drop-rate reproduction", ok,
              f"rho2={rho:.6e}, drops={drops} in 99% CI [{lo:.0f}, {hi:.0f}], {elapsed:.1f}s")
    assert f"{rho:.0e}" == "7e-05"
    assert lo <= drops <= hi
    assert elapsed <= 300


def test_oracle_equivalence(criterion):
    a_comp = 0.49
    oracle = abs_diff_oracle(uniform_pdf(0.01, 0.5), (0.01, 0.5), grid_n=10_000)
    y = np.linspace(0.0, a_comp, 10_000)
    err_comp = float(np.max(np.abs(oracle.cdf(y) - comp_pdv_dist(0.01, 0.5).cdf(y))))

    a_prop = 100.0 / 300.0
    oracle = abs_diff_oracle(scaled_distance_pdf(100.0, 300.0), (0.0, a_prop), grid_n=10_000)
    y = np.linspace(0.0, a_prop, 10_000)
    err_prop = float(np.max(np.abs(oracle.cdf(y) - prop_pdv_dist(100.0, 300.0).cdf(y))))

    ok = err_comp <= 1e-6 and err_prop <= 1e-6
    criterion(2, "closed forms vs quadrature oracle", ok,
              f"sup error comp={err_comp:.2e}, prop={err_prop:.2e} (tol 1e-6)")
    assert err_comp <= 1e-6
    assert err_prop <= 1e-6


def test_pdv_regime_check(criterion):
    results = {}
    for name, kind, tol in (("fig3a", "comp", 0.01), ("fig3b", "prop", 0.02)):
        system = build_named(name)
        mc = run_monte_carlo(system, 1_000_000, 3, "statistical")
        ks = ks_distance(mc.pdv, approximation_for(system, kind).cdf)
        results[name] = (ks, tol)
    ok = all(ks <= tol for ks, tol in results.values())
    detail = ", ".join(f"{n} KS={ks:.4f} (tol {tol})" for n, (ks, tol) in results.items())
    criterion(3, "PDV regime check", ok, detail)
    for name, (ks, tol) in results.items():
        assert ks <= tol, f"{name}: KS {ks:.4f} > {tol}"


def test_psv_curve_properties(criterion):
    failures = []
    for name, kind in (("fig4a", "comp"), ("fig4b", "prop"), ("fig3a", "comp"), ("fig3b", "prop")):
        system = build_named(name)
        dist = approximation_for(system, kind)
        rho2 = system.rho2
        W = np.linspace(0.0, 1.5 * dist.hi, 400)
        mc = run_monte_carlo(system, 200_000, 4, "statistical", W_grid=W)
        sigma = psv(W, rho2, dist)
        beyond = W >= dist.hi
        checks = {
            "empirical monotone": np.all(np.diff(mc.psv.sigma) <= 0),
            "analytic monotone": np.all(np.diff(sigma) <= 0),
            "floor": np.all(sigma >= rho2),
            "tail": np.all(sigma[beyond] - rho2 <= 1e-9),
        }
        failures += [f"{name}: {k}" for k, good in checks.items() if not good]
    criterion(4, "PSV curve properties", not failures, "; ".join(failures) or "all runs")
    assert not failures


def test_design_round_trip(criterion):
    worst_sigma, worst_agree, frame_bad = 0.0, 0.0, []
    for name, kind in (("fig5a", "comp"), ("fig5b", "prop")):
        system = build_named(name)
        dist = approximation_for(system, kind)
        for target in (1e-1, 1e-2, 1e-3):
            d = design_twi(target, system.rho2, dist, system.comm.T_f)
            worst_sigma = max(worst_sigma, abs(psv(d.W_star, system.rho2, dist) - target))
            if psv(d.W_frame, system.rho2, dist) > target:
                frame_bad.append((name, target))
            if kind == "comp":
                closed = invert_comp_closed_form(target, system.rho2, dist.hi)
                bis = invert_psv_bisection(target, system.rho2, dist)
                worst_agree = max(worst_agree, abs(closed - bis))
    ok = worst_sigma <= 1e-9 and not frame_bad and worst_agree <= 1e-10
    criterion(5, "TWI design round trip", ok,
              f"max |sigma(W*)-target|={worst_sigma:.1e}, max |closed-bisection|={worst_agree:.1e} s, "
              f"frame-aligned failures={len(frame_bad)}")
    assert worst_sigma <= 1e-9
    assert not frame_bad
    assert worst_agree <= 1e-10


def test_detection_outage_validation(criterion):
    n = 1_000_000
    rng = np.random.default_rng(np.random.SeedSequence(6))
    comm = CommConfig(gamma_th_override=1.0)
    worst, lines = 0.0, []
    for gamma in (1.0, 4.0, 10.0):
        link = uniform_links(1, gamma_override=gamma)[0].derive(comm)
        for label, fn, p in (("zeta", sr_successes, link.zeta), ("eps", pt_successes, link.epsilon)):
            fails = n - int(fn(link, ChannelMode.SIGNAL_LEVEL, rng, n).sum())
            z = abs(fails - n * p) / math.sqrt(n * p * (1 - p))
            worst = max(worst, z)
            lines.append(f"{label}({gamma:g})={fails / n:.5f}/{p:.5f}")
    criterion(6, "signal-level detection and outage", worst <= 3,
              f"max deviation {worst:.2f} sd; " + ", ".join(lines))
    assert worst <= 3


def test_access_delay_oracle(criterion):
    sc = ScenarioConfig()
    comm = CommConfig(M_max=5, N_max=5, gamma_th_override=math.log(2))
    system = SystemConfig(sc, comm, uniform_links(2, gamma_override=1.0))
    link = system.derived()[0]
    assert link.zeta == pytest.approx(0.5) and link.epsilon == pytest.approx(0.5)
    batch = simulate_batch(system, "statistical", 7, 600_000)
    ok_mask = ~batch.dropped
    frames = (batch.sr_attempts + batch.pt_attempts)[ok_mask]
    exact = access_delay_pmf(0.5, 0.5, 5, 5, comm.T_f).as_dict()
    tv = tv_distance(empirical_pmf(frames), exact)
    criterion(7, "access-delay oracle", frames.size >= 1_000_000 and tv < 0.005,
              f"TV={tv:.5f} over {frames.size} samples (tol 0.005)")
    assert frames.size >= 1_000_000
    assert tv < 0.005


def test_twi_buffer_exhaustive(criterion):
    mismatches, cases = 0, 0
    for W, t0 in ((0.02, 0.0), (0.013, 0.0), (0.05, 0.007)):
        lattice = np.arange(int(round(5 * W / 1e-3)) + 1) * 1e-3
        rows, expect_v, expect_l = [], [], []
        for t1, t2 in itertools.product(lattice, lattice):
            for drop1, drop2 in itertools.product((False, True), repeat=2):
                a1 = math.inf if drop1 else float(t1)
                a2 = math.inf if drop2 else float(t2)
                records, violation = ingest([(1, a1), (2, a2)], W, 2, t0)
                cases += 1
                if drop1 and drop2:
                    want_v, want_l = False, None
                else:
                    first = min(a1, a2)
                    delta = abs(a2 - a1) if not (drop1 or drop2) else math.inf
                    want_v = (drop1 != drop2) or delta > W
                    want_l = first + min(delta, W) - t0
                got_l = records[0].latency if records else None
                if violation != want_v or got_l != want_l:
                    mismatches += 1
                rows.append((a1, a2))
                expect_v.append(want_v)
                expect_l.append(np.nan if want_l is None else want_l)
        arr = np.array(rows)
        flags, _ = event_violations(arr, W)
        lat = first_delivery_latency(arr, W, t0)
        mismatches += int(np.sum(flags != np.array(expect_v)))
        mismatches += int(np.sum(~((lat == np.array(expect_l)) | (np.isnan(lat) & np.isnan(expect_l)))))
    criterion(8, "TWI buffer exhaustive grid", mismatches == 0, f"{cases} cases, {mismatches} mismatches")
    assert mismatches == 0


def test_cli_determinism(criterion, tmp_path, capsys):
    n = str(2 * BLOCK_SIZE + 4_464)  # spans three blocks, the last one partial
    runs = {}
    for tag, threads in (("t1", "1"), ("t1_again", "1"), ("t3", "3")):
        out = tmp_path / tag
        assert main(["simulate", "--scenario", "fig3a", "--replications", n, "--seed", "11",
                     "--threads", threads, "--out-dir", str(out), "--trace", "3"]) == 0
        assert main(["reproduce", "fig4b", "--replications", "40000", "--threads", threads,
                     "--out-dir", str(out / "fig4b")]) == 0
        assert main(["analytic", "--scenario", "fig3b", "--dist", "prop", "--query", "psv",
                     "--grid", "0:0.4:0.01", "--out", str(out / "analytic.csv")]) == 0
        assert main(["design-twi", "--scenario", "fig5a", "--target-sigma", "1e-3",
                     "--out", str(out / "design.csv")]) == 0
        runs[tag] = {p.relative_to(out).as_posix(): p.read_bytes()
                     for p in sorted(out.rglob("*")) if p.is_file()}
    capsys.readouterr()
    same = runs["t1"] == runs["t1_again"] == runs["t3"]
    criterion(9, "byte-identical CLI output", same,
              f"{len(runs['t1'])} files compared across reruns and 1 vs 3 threads")
    assert same
