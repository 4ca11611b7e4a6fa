"""Command line entry point: ``divest estimate | sweep | compare``."""
from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import harness
from .distributions import parse_dist
from .errors import ArgumentError, DivestError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_sigma(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigma", type=float, help="fixed kernel bandwidth (squared-distance units)")
    g.add_argument("--sigma-rule", choices=("default", "median"), default="default",
                   help="'default': 0.1 for 1-D data, median heuristic otherwise")


def _sigma(args):
    return args.sigma if args.sigma is not None else args.sigma_rule


def build_parser():
    parser = argparse.ArgumentParser(prog="divest", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a divergence from two sample files")
    est.add_argument("--estimator", required=True, choices=("m1", "m2", "chi2", "wkv"))
    est.add_argument("--p-file", required=True, help="samples from P, one point per line")
    est.add_argument("--q-file", required=True, help="samples from Q, one point per line")
    _add_sigma(est)
    est.add_argument("--lambda-scale", type=float, default=1.0, help="lambda = C / n")
    est.add_argument("--gamma", type=str, default="1/2", help="WKV cell exponent, s = ceil(n^gamma)")
    est.add_argument("--seed", type=int, default=0,
                     help="seed for subsampling the larger file when sizes differ")

    sw = sub.add_parser("sweep", help="run a convergence experiment and write CSV")
    sw.add_argument("--p", help="distribution P, e.g. gauss:0,1")
    sw.add_argument("--q", help="distribution Q, e.g. gauss:1,1")
    sw.add_argument("--pair", choices=sorted(harness.PRESET_PAIRS),
                    help="use a preset (P, Q) pair instead of --p/--q")
    sw.add_argument("--estimators", default="m1,m2,wkv:1/3,wkv:1/2,wkv:2/3")
    sw.add_argument("--scale", choices=("desk", "full"), default="desk",
                    help="default n-grid and replication count")
    sw.add_argument("--n-grid", type=_int_list)
    sw.add_argument("--reps", type=int)
    sw.add_argument("--seed", type=int, default=0)
    _add_sigma(sw)
    sw.add_argument("--lambda-scale", type=float, default=1.0)
    sw.add_argument("--timing", action="store_true",
                    help="record runtime_ms (output is then no longer byte-reproducible)")
    sw.add_argument("--out", required=True)

    cmp_ = sub.add_parser("compare", help="summarise a sweep CSV")
    cmp_.add_argument("--in", dest="inp", required=True)
    cmp_.add_argument("--aggregate-out", help="write per-(estimator, n) aggregates as CSV")
    return parser


def _estimate(args):
    x = harness.read_samples(args.q_file)
    y = harness.read_samples(args.p_file)
    if x.shape[1] != y.shape[1]:
        raise ArgumentError(f"P has dimension {y.shape[1]} but Q has {x.shape[1]}")
    kind = args.estimator
    if kind in ("m1", "m2") and x.shape[0] != y.shape[0]:
        rng = np.random.default_rng(args.seed)
        m = min(x.shape[0], y.shape[0])
        print(f"note: subsampling both files to n={m}", file=sys.stderr)
        x = x[np.sort(rng.choice(x.shape[0], m, replace=False))] if x.shape[0] > m else x
        y = y[np.sort(rng.choice(y.shape[0], m, replace=False))] if y.shape[0] > m else y
    est_id = harness.parse_estimator(f"wkv:{args.gamma}" if kind == "wkv" else kind)
    res = harness.estimate_divergence(est_id, x, y, _sigma(args), args.lambda_scale)
    print(f"estimator: {est_id}")
    print(f"estimate: {res.value!r}")
    print(f"n: {res.n}")
    for label, val in (("sigma", res.sigma), ("lambda", res.lam),
                       ("iterations", res.solver_iterations), ("duality_gap", res.duality_gap)):
        if val is not None:
            print(f"{label}: {val!r}")
    if kind in ("m1", "m2"):
        print(f"converged: {str(res.converged).lower()}")
    return EXIT_OK


def _sweep(args):
    if args.pair:
        if args.p or args.q:
            raise ArgumentError("--pair cannot be combined with --p/--q")
        p_text, q_text = harness.PRESET_PAIRS[args.pair]
    elif args.p and args.q:
        p_text, q_text = args.p, args.q
    else:
        raise ArgumentError("sweep needs --p and --q, or --pair")
    desk = args.scale == "desk"
    cfg = harness.ExperimentConfig(
        p_spec=parse_dist(p_text),
        q_spec=parse_dist(q_text),
        estimators=tuple(t for t in args.estimators.split(",") if t.strip()),
        n_grid=tuple(args.n_grid or (harness.DESK_N_GRID if desk else harness.FULL_N_GRID)),
        replications=args.reps or (harness.DESK_REPS if desk else harness.FULL_REPS),
        base_seed=args.seed,
        lambda_scale=args.lambda_scale,
        sigma=_sigma(args),
        output_path=args.out,
        record_runtime=args.timing,
    )
    result = harness.run_sweep(cfg)
    failed = sum(r.failed for r in result.rows)
    print(f"wrote {len(result)} rows to {args.out}" + (f" ({failed} failed)" if failed else ""))
    return EXIT_OK


def _compare(args):
    result = harness.read_csv(args.inp)
    aggs = harness.aggregate(result)
    slopes = harness.rate_slopes(result)
    print(f"{'estimator':<10} {'n':>7} {'median_est':>11} {'med|err|':>10} {'mse':>10} {'fail':>5}")
    for a in aggs:
        print(f"{a.estimator:<10} {a.n:>7} {a.median_estimate:>11.4f} "
              f"{a.median_abs_error:>10.4f} {a.mse:>10.3g} {a.failures:>5}")
    for est, slope in sorted(slopes.items()):
        text = "n/a" if math.isnan(slope) else f"{slope:.3f}"
        print(f"rate {est}: log-log slope of median |error| = {text}")
    if args.aggregate_out:
        harness.write_aggregate_csv(aggs, args.aggregate_out)
    return EXIT_OK


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"estimate": _estimate, "sweep": _sweep, "compare": _compare}[args.command]
    try:
        return handler(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
