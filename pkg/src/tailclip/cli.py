"""Command-line interface.

Subcommands: run, noise-probe, lemma-check, lowerbound, chain-check,
sandwich, report.  Every subcommand accepts --seed, --out and --format
{csv,json-lines}.  Exit status: 0 all checks pass, 1 a declared check
failed, 2 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import apply_overrides, load_config
from .diagnostics import sandwich_fuzz
from .errors import ConfigurationError
from .noise import NoiseSpec
from .report import Report
from .runner import OUT_DIR_ENV, read_csv, run_experiment, traces_from_rows
from .suites import chain_suite, lemma_check, lowerbound_suite, noise_probe

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def _out_dir(args) -> Path:
    out = Path(args.out if args.out else os.environ.get(OUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_table(path: Path, fmt: str, header: list[str], rows: list[list]):
    if fmt == "csv":
        with open(path.with_suffix(".csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
        return path.with_suffix(".csv")
    with open(path.with_suffix(".jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(dict(zip(header, row)), sort_keys=True) + "\n")
    return path.with_suffix(".jsonl")


def _print_verdicts(verdicts) -> bool:
    ok = True
    for v in verdicts:
        print(v.line())
        ok = ok and v.passed
    return ok


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    parser.add_argument("--out", type=str, default="", help="output directory")
    parser.add_argument(
        "--format",
        choices=("csv", "json-lines"),
        default="csv",
        help="tabular output format",
    )


def _noise_spec_from_args(args) -> NoiseSpec:
    return NoiseSpec(
        family=args.family,
        dimension=args.dimension,
        scale=args.scale,
        tail_index=args.a,
    )


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.override:
        apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg.master_seed = args.seed
    result = run_experiment(
        cfg, out_dir=_out_dir(args), fmt=args.format, parallel=args.parallel
    )
    print(result.report.render_text(), end="")
    print(f"data: {result.paths['data']}")
    return EXIT_OK if result.report.passed else EXIT_CHECK_FAILED


def cmd_noise_probe(args) -> int:
    spec = _noise_spec_from_args(args)
    rng = np.random.default_rng(args.seed)
    n = int(float(args.n))
    res = noise_probe(spec, n, rng, block_size=args.block_size, bins=args.bins)
    out = _out_dir(args)
    rows = [[c, v] for c, v in res.variance_curve]
    path = _write_table(out / "noise_probe_variance", args.format, ["sample_count", "second_moment"], rows)
    hist_rows = [
        [float(res.histogram.edges[i]), float(res.histogram.edges[i + 1]), int(res.histogram.counts[i])]
        for i in range(len(res.histogram.counts))
    ]
    _write_table(out / "noise_probe_histogram", args.format, ["bin_lo", "bin_hi", "count"], hist_rows)
    for c, v in res.variance_curve:
        print(f"n={c}: empirical second moment {v:.6g}")
    if res.tail is not None:
        print(f"tail index alpha_hat = {res.tail.alpha_hat:.4f} (block size {res.tail.block_size})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_lemma_check(args) -> int:
    spec = _noise_spec_from_args(args)
    rng = np.random.default_rng(args.seed)
    taus = [float(t) for t in args.taus.split(",")]
    res = lemma_check(spec, taus, int(float(args.n)), rng, args.alpha, grad_norm=args.grad_norm)
    rows = [
        [p.tau, p.second_moment, p.second_moment_se, p.bias_norm, p.bias_se,
         p.bound_second_moment, p.bound_bias]
        for p in res.probes
    ]
    path = _write_table(
        _out_dir(args) / "lemma_check",
        args.format,
        ["tau", "second_moment", "second_moment_se", "bias_norm", "bias_se",
         "bound_second_moment", "bound_bias"],
        rows,
    )
    ok = _print_verdicts(res.verdicts)
    print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_lowerbound(args) -> int:
    rng = np.random.default_rng(args.seed)
    eps = [float(e) for e in args.epsilons.split(",")]
    alphas = [float(a) for a in args.alphas.split(",")]
    res = lowerbound_suite(eps, alphas, int(float(args.n)), rng)
    ok = _print_verdicts(res.verdicts)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_chain_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    res = chain_suite(args.d, int(float(args.points)), rng, p=args.p)
    ok = _print_verdicts(res.verdicts)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_sandwich(args) -> int:
    rng = np.random.default_rng(args.seed)
    res = sandwich_fuzz(
        int(float(args.fuzz)), rng, v_max=args.v_max, g_max=args.g_max,
        a=args.a, beta2=args.beta2, epsilon=args.epsilon,
    )
    print(
        f"fuzz n={res.n}: violations={res.violations} "
        f"min_ratio={res.min_ratio:.6f} max_ratio={res.max_ratio:.6f}"
    )
    if res.min_ratio < 0.5:
        print("note: observed ratio drops below 1/2; the provable band is [1/4, 1/2]")
    return EXIT_OK if res.passed else EXIT_CHECK_FAILED


def cmd_report(args) -> int:
    rows = read_csv(Path(args.csv))
    traces = traces_from_rows(rows)
    from .diagnostics import fit_loglog_slope
    from .optimizers import average_traces

    report = Report(
        experiment=rows[0]["experiment"] if rows else "unknown",
        version=__version__,
        master_seed=args.seed,
    )
    mean_trace = average_traces(traces, stat="mean")
    if args.slope_expect is not None:
        kmax = args.kmax if args.kmax else float(mean_trace.ks[-1])
        fit = fit_loglog_slope(mean_trace, args.metric, (args.kmin, kmax))
        from .report import Verdict

        report.verdicts.append(
            Verdict(
                criterion="slope",
                description=f"log-log slope of seed-mean {args.metric}",
                observed=f"{fit.slope:.4f} (r2={fit.r_squared:.3f})",
                threshold=f"{args.slope_expect:.4f} +- {args.slope_tol}",
                passed=abs(fit.slope - args.slope_expect) <= args.slope_tol,
            )
        )
    out = _out_dir(args)
    path = out / (Path(args.csv).stem + ".report.txt")
    path.write_text(report.render_text(), encoding="utf-8")
    (out / (Path(args.csv).stem + ".verdicts.jsonl")).write_text(
        report.verdict_jsonl(), encoding="utf-8"
    )
    print(report.render_text(), end="")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailclip",
        description="Clipped stochastic gradient methods under heavy-tailed noise",
    )
    parser.add_argument("--version", action="version", version=f"tailclip {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a declarative experiment config")
    p.add_argument("config", type=str, help="path to the experiment config file")
    p.add_argument("--override", "-O", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--parallel", type=int, default=None, help="worker processes across seeds")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", type=str, default="")
    p.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("noise-probe", help="histogram, variance curve and tail index of a noise spec")
    p.add_argument("--family", type=str, default="stable")
    p.add_argument("--a", type=float, default=1.5, help="tail/stability index")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--dimension", type=int, default=1)
    p.add_argument("--n", type=str, default="1e6")
    p.add_argument("--block-size", type=int, default=100)
    p.add_argument("--bins", type=int, default=50)
    _add_common(p)
    p.set_defaults(func=cmd_noise_probe)

    p = sub.add_parser("lemma-check", help="bias/variance probes over a threshold grid")
    p.add_argument("--family", type=str, default="stable")
    p.add_argument("--a", type=float, default=1.55, help="tail/stability index of the sampler")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--dimension", type=int, default=10)
    p.add_argument("--alpha", type=float, default=1.5, help="moment exponent of the bounds")
    p.add_argument("--taus", type=str, default="2,5,10,20,50")
    p.add_argument("--n", type=str, default="1e6")
    p.add_argument("--grad-norm", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=cmd_lemma_check)

    p = sub.add_parser("lowerbound", help="validate the adversarial two-point oracle")
    p.add_argument("--epsilons", type=str, default="0.125,0.0625")
    p.add_argument("--alphas", type=str, default="1.5,2")
    p.add_argument("--n", type=str, default="1e6")
    _add_common(p)
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("chain-check", help="verify the chain hard instance's properties")
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--points", type=str, default="1e5")
    p.add_argument("--p", type=float, default=0.5, help="oracle revealing probability")
    _add_common(p)
    p.set_defaults(func=cmd_chain_check)

    p = sub.add_parser("sandwich", help="fuzz the RMSProp/clipping step-size correspondence")
    p.add_argument("--fuzz", type=str, default="1e6")
    p.add_argument("--v-max", type=float, default=100.0)
    p.add_argument("--g-max", type=float, default=100.0)
    p.add_argument("--a", type=float, default=1e-3)
    p.add_argument("--beta2", type=float, default=0.99)
    p.add_argument("--epsilon", type=float, default=1e-8)
    _add_common(p)
    p.set_defaults(func=cmd_sandwich)

    p = sub.add_parser("report", help="re-render a report from a results CSV")
    p.add_argument("--csv", type=str, required=True)
    p.add_argument("--metric", type=str, default="suboptimality")
    p.add_argument("--slope-expect", type=float, default=None)
    p.add_argument("--slope-tol", type=float, default=0.15)
    p.add_argument("--kmin", type=float, default=1.0)
    p.add_argument("--kmax", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception:
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
