#!/usr/bin/env python3
"""Pilot runs behind the frozen acceptance-suite constants.

Runs the acceptance experiments at their real scales and prints the
observed slopes, ratios, envelopes and calibrated constants.  The values
asserted in tests/test_acceptance.py (noise scales, starting points,
tolerances) were chosen by inspecting this output; rerun after any change
to the samplers or optimizers to confirm the margins still hold.

Usage: python3 scripts/pilot_acceptance.py [--quick]
"""

import argparse
import math
import sys
import time

import numpy as np

from tailclip.diagnostics import bound_envelope_check, fit_loglog_slope, strongly_convex_bound
from tailclip.noise import NoiseSpec
from tailclip.optimizers import (
    OptimizerConfig,
    average_traces,
    cclip_schedule,
    constant_schedule,
    run_seeds,
    nonconvex_schedule,
    strongly_convex_schedule,
)
from tailclip.problems import Ball, estimate_B, estimate_G, estimate_sigma, nonconvex_problem, quadratic_problem
from tailclip.runner import calibration_stream


def stopwatch(label):
    class _W:
        def __enter__(self):
            self.t = time.perf_counter()
            return self

        def __exit__(self, *exc):
            print(f"  [{label}: {time.perf_counter() - self.t:.1f}s]")

    return _W()


def pilot_strongly_convex(alpha, family, tail, seeds, K, master_seed=20240601):
    d, mu, scale = 10, 1.0, 1.0
    noise = NoiseSpec(family, dimension=d, tail_index=tail, scale=scale)
    problem = quadratic_problem(mu, d, 0.0, noise)
    x0 = np.full(d, 1.5)
    problem.domain = Ball(center=x0, radius=2.0 * float(np.linalg.norm(x0)))
    G = estimate_G(problem, x0, alpha, 10**6, calibration_stream(master_seed))
    sched = strongly_convex_schedule(mu, G, alpha)
    cfg = OptimizerConfig(
        "proj_gclip", sched, K, x0=x0, averaging=True, record="log"
    )
    traces = run_seeds(problem, cfg, seeds, master_seed, parallel=1)
    mean = average_traces(traces)
    fit = fit_loglog_slope(mean, "suboptimality", (100, K))
    env = bound_envelope_check(mean, strongly_convex_bound(mu, G, alpha), k_min=10)
    print(f"  G_hat={G:.3f} slope={fit.slope:.4f} (r2={fit.r_squared:.3f}) "
          f"target={-2*(alpha-1)/alpha:.4f} envelope_violations={len(env.violations)}")
    return fit, env


def pilot_sgd_vs_gclip(seeds=20, K=10**5, master_seed=11):
    noise = NoiseSpec("stable", dimension=1, tail_index=1.5, scale=1.0)
    problem = quadratic_problem(1.0, 1, 0.0, noise)
    out = {}
    for name, alg, tau in (("sgd", "sgd", math.inf), ("gclip", "gclip", 1.0)):
        cfg = OptimizerConfig(alg, constant_schedule(0.1, tau), K, x0=1.0, record="log")
        traces = run_seeds(problem, cfg, seeds, master_seed, parallel=1)
        ratios = []
        for t in traces:
            ks = list(t.ks)
            ratios.append(t.avg_grad_sq[ks.index(K)] / t.avg_grad_sq[ks.index(1000)])
        out[name] = float(np.median(ratios))
        print(f"  {name}: median running-mean ratio {out[name]:.3f} "
              f"(range {min(ratios):.2f}..{max(ratios):.2f})")
    return out


def pilot_cclip_vs_gclip(seeds=30, K=10**5, master_seed=5):
    d, mu, alpha = 100, 1.0, 1.5
    noise = NoiseSpec("stable", dimension=d, tail_index=1.55, scale=1.0)
    problem = quadratic_problem(mu, d, 0.0, noise)
    x0 = np.full(d, 1.0)
    problem.domain = Ball(center=x0, radius=2.0 * float(np.linalg.norm(x0)))
    cal = calibration_stream(master_seed)
    G = estimate_G(problem, x0, alpha, 2 * 10**5, cal)
    B = estimate_B(problem, x0, alpha, 2 * 10**5, cal)
    finals = {}
    for name, alg, sched in (
        ("gclip", "proj_gclip", strongly_convex_schedule(mu, G, alpha)),
        ("cclip", "cclip", cclip_schedule(mu, B, alpha)),
    ):
        cfg = OptimizerConfig(alg, sched, K, x0=x0, averaging=True, record=[K])
        traces = run_seeds(problem, cfg, seeds, master_seed, parallel=1)
        finals[name] = np.array([t.suboptimality[-1] for t in traces])
        print(f"  {name}: seed-mean final subopt {finals[name].mean():.4f} "
              f"(median {np.median(finals[name]):.4f})")
    wins = int(np.sum(finals["cclip"] < finals["gclip"]))
    from scipy.stats import binomtest

    p = binomtest(wins, seeds, 0.5, alternative="greater").pvalue
    print(f"  G={G:.2f} ||B||2={np.linalg.norm(B):.2f} cclip wins {wins}/{seeds}, sign test p={p:.2e}")
    return finals, wins, p


def pilot_nonconvex(scale, seeds=10, K=10**5, master_seed=17):
    d, alpha = 10, 1.5
    noise = NoiseSpec("stable", dimension=d, tail_index=1.55, scale=scale)
    problem = nonconvex_problem(d, noise)
    x0 = np.full(d, 1.2)
    sigma = estimate_sigma(noise, alpha, 10**6, calibration_stream(master_seed))
    f0 = problem.value(x0)
    sched = nonconvex_schedule(2.0, sigma, alpha, K, f0)
    cfg = OptimizerConfig("gclip", sched, K, x0=x0, record="log")
    traces = run_seeds(problem, cfg, seeds, master_seed, parallel=1)
    mean = average_traces(traces)
    ks = list(mean.ks)
    ratio = mean.avg_min_stat[ks.index(1000)] / mean.avg_min_stat[ks.index(K)]
    fit = fit_loglog_slope(mean, "avg_min_stat", (1000, K))
    print(f"  scale={scale}: sigma_hat={sigma:.4f} eta={sched.eta_param:.3g} "
          f"tau={float(sched.tau_base):.3g} eta*K={sched.eta_param*K:.2f} "
          f"decay_ratio={ratio:.2f} slope={fit.slope:.3f}")
    return ratio, fit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="reduced scales for a fast look")
    args = ap.parse_args()
    seeds_a1 = 10 if args.quick else 50
    K = 10**4 if args.quick else 10**5

    print("A1/A2 strongly convex, heavy tails (alpha=1.5, stable a=1.55):")
    with stopwatch("A1"):
        pilot_strongly_convex(1.5, "stable", 1.55, seeds_a1, K)
    print("A3 standard noise recovery (alpha=2, gaussian):")
    with stopwatch("A3"):
        pilot_strongly_convex(2.0, "gaussian", 2.0, seeds_a1, K)
    print("A4 SGD nonconvergence vs GClip:")
    with stopwatch("A4"):
        pilot_sgd_vs_gclip(20, K)
    print("A6 CClip vs GClip at d=100:")
    with stopwatch("A6"):
        pilot_cclip_vs_gclip(10 if args.quick else 30, K)
    print("A10 nonconvex decay under the constant schedule:")
    for scale in (0.05, 0.02, 0.01):
        with stopwatch("A10"):
            pilot_nonconvex(scale, 5 if args.quick else 10, K)
    return 0


if __name__ == "__main__":
    sys.exit(main())
