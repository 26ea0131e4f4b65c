"""Minimal relative approximation error of an effective discount by groups of customers.

Writes one CSV row per (chunk size, target, timestep) and prints the median
error per chunk size.
"""
import argparse
import csv
import sys

import numpy as np

from discount_scheduling.datagen import GeneratorConfig, generate_instance
from discount_scheduling.decomposition import approximation_error_study


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--customers", type=int, default=100)
    ap.add_argument("--chunk-sizes", default="1,2,3,5,10", help="comma-separated group sizes")
    ap.add_argument("--grid-points", type=int, default=21, help="points on [-z_max, z_max]; zero is dropped")
    ap.add_argument("--timesteps", type=int, default=76)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-o", "--output", help="CSV path (default: standard output)")
    args = ap.parse_args(argv)

    inst = generate_instance(GeneratorConfig(n_customers=args.customers, n_timesteps=args.timesteps, seed=args.seed))
    z_max = inst.scheme.z_max
    grid = np.linspace(-z_max, z_max, args.grid_points)
    grid = grid[np.abs(grid) > 1e-12]
    sizes = [int(s) for s in args.chunk_sizes.split(",") if s]
    rows = approximation_error_study(inst, sizes, grid, seed=args.seed)

    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=["chunk_size", "zeta", "timestep", "error"])
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.output:
            out.close()
    for m in sizes:
        err = [r["error"] for r in rows if r["chunk_size"] == m]
        print(f"m={m:3d}  median={np.median(err):.3e}  p90={np.quantile(err, 0.9):.3e}", file=sys.stderr)


if __name__ == "__main__":
    main()
