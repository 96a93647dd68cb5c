"""Command line entry point: ``fluxcdf {gen-hull,estimate,bench,converge,default-config}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import estimators, geometry, harness
from .flows import FlowSpec, make_flow
from .refine import DEFAULT_EPSILON, run_bfa


def _cmd_gen_hull(args) -> int:
    spec = FlowSpec.load(args.flow)
    hull = harness.generate_hull(
        harness.HullSpec(spec, args.radius, args.n_points, args.seed, args.min_cdf),
        reference_samples=args.reference_samples,
    )
    data = hull.boundary.to_json()
    data["meta"] = {
        "center": hull.center.tolist(),
        "radius": args.radius,
        "seed": args.seed,
        "reference": hull.reference,
        "reference_se": hull.reference_se,
        "attempts": hull.attempts,
    }
    with open(args.out, "w") as fh:
        json.dump(data, fh, indent=1)
    print(f"hull with {hull.boundary.n_facets} facets, reference {hull.reference:.6g} "
          f"± {hull.reference_se:.2g} after {hull.attempts} attempt(s)")
    return 0


def _cmd_estimate(args) -> int:
    flow = make_flow(FlowSpec.load(args.flow))
    boundary = geometry.load_polytope(args.polytope)
    rng = np.random.default_rng(args.seed)
    if args.method == "mc":
        trace = estimators.mc_estimate(flow, boundary, args.budget, rng, seed=args.seed)
    elif args.method == "is":
        trace = estimators.is_estimate(flow, boundary, args.budget, rng, seed=args.seed)
    elif args.method == "bfs":
        trace = estimators.bfs_estimate(flow, boundary, args.budget, rng, args.variant, seed=args.seed)
    else:
        trace = run_bfa(flow, boundary, args.budget, args.epsilon, args.verify_complex)
    trace = trace.thinned(args.trace_every)
    trace.write_csv(args.out)
    print(f"{args.method}: {trace.final:.10g} after {trace.entries[-1][0]} points")
    return 0


def _bench_config(args) -> harness.BenchConfig:
    if args.config:
        return harness.BenchConfig.load(args.config)
    return harness.default_config(tuple(args.dims))


def _cmd_bench(args) -> int:
    config = _bench_config(args)
    summary = harness.run_bench(config, args.out_dir, args.workers)
    print(harness.format_table(summary["methods"]))
    if summary["failures"]:
        print(f"{len(summary['failures'])} failed cell(s), see summary.json", file=sys.stderr)
    return 0


def _cmd_converge(args) -> int:
    flow = make_flow(FlowSpec.load(args.flow))
    boundary = geometry.load_polytope(args.polytope)
    reference, se = harness.reference_cdf(flow, boundary, args.reference_samples)
    bundle = harness.convergence_report(flow, boundary, args.budget, args.runs, args.seed, args.epsilon)
    harness.write_convergence(bundle, reference, args.out)
    print(f"reference {reference:.6g} ± {se:.2g}")
    for method, traces in bundle.items():
        finals = [abs(t.final - reference) for t in traces]
        print(f"{method}: median final abs error {np.median(finals):.3g}")
    return 0


def _cmd_default_config(args) -> int:
    harness.default_config(tuple(args.dims)).save(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluxcdf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-hull", help="sample a sphere-point convex hull around a flow sample")
    p.add_argument("--flow", required=True)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--n-points", type=int, default=20)
    p.add_argument("--min-cdf", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference-samples", type=int, default=harness.REFERENCE_SAMPLES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_hull)

    p = sub.add_parser("estimate", help="run one estimator and write its trace")
    p.add_argument("--method", choices=["mc", "is", "bfs", "bfa"], required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--polytope", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["area_weighted", "per_simplex"], default="area_weighted")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--trace-every", type=int, default=1)
    p.add_argument("--verify-complex", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("bench", help="run the benchmark grid")
    p.add_argument("--config")
    p.add_argument("--dims", type=int, nargs="+", default=[2, 3])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("converge", help="error-vs-points traces for all methods")
    p.add_argument("--flow", required=True)
    p.add_argument("--polytope", required=True)
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--reference-samples", type=int, default=harness.REFERENCE_SAMPLES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("default-config", help="write the default benchmark config as JSON")
    p.add_argument("--dims", type=int, nargs="+", default=[2, 3])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_default_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
