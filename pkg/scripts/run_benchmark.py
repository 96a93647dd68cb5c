"""Run the default benchmark grid and print the per-method error table.

    python scripts/run_benchmark.py --dims 2 3 --out-dir results/bench
    python scripts/run_benchmark.py --config my_config.json --workers 4
"""

import argparse
import json
import logging
from pathlib import Path

from fluxcdf import harness


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="BenchConfig JSON; defaults to the built-in grid")
    parser.add_argument("--dims", type=int, nargs="+", default=[2, 3])
    parser.add_argument("--budget", type=int)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out-dir", default="results/bench")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    config = harness.BenchConfig.load(args.config) if args.config else harness.default_config(tuple(args.dims))
    if args.budget:
        config.budget = args.budget
    if args.runs:
        config.runs = args.runs
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")

    summary = harness.run_bench(config, out, args.workers)
    print(harness.format_table(summary["methods"]))

    # per-dimension breakdown, since the aggregate mixes very different regimes
    records = harness.read_records(out / "records.csv")
    by_dim = {}
    for dim in sorted({r.dim for r in records}):
        by_dim[dim] = harness.summarize([r for r in records if r.dim == dim])
        print(f"\nd = {dim}")
        print(harness.format_table(by_dim[dim]))
    (out / "summary_by_dim.json").write_text(json.dumps(by_dim, indent=1, sort_keys=True))
    if summary["failures"]:
        print(f"\n{len(summary['failures'])} failed cell(s):")
        for hull_id, err in summary["failures"].items():
            print(f"  {hull_id}: {err}")


if __name__ == "__main__":
    main()
