#!/usr/bin/env python3
"""Refinement study on Lloyd-relaxed Voronoi meshes (example2, k = 0).

Tabulates the 1,h error (rate 1), the L2 error (rate 2) and the augmented
flux norm error (rate 1) over a sequence of polygonal meshes, and writes
results/table2.csv.
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from stagpoly.polymesh import gen_voronoi_polygons
from stagpoly.postprocess import convergence_study
from stagpoly.problems import example2


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, nargs="+",
                    default=[64, 256, 1024, 4096])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--lloyd-iters", type=int, default=100)
    ap.add_argument("--degree", type=int, default=0)
    ap.add_argument("--quadrature", choices=["paper", "high"], default="paper")
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    meshes = []
    for n in args.cells:
        t0 = time.perf_counter()
        meshes.append(gen_voronoi_polygons(n, lloyd_iters=args.lloyd_iters,
                                           rng_seed=args.seed))
        print(f"generated {n:5d}-cell Voronoi mesh "
              f"in {time.perf_counter() - t0:.1f}s")

    report = convergence_study(example2(), meshes, k=args.degree,
                               mode=args.quadrature)
    print()
    print(report.format_table())

    os.makedirs(args.outdir, exist_ok=True)
    out = os.path.join(args.outdir, "table2.csv")
    with open(out, "w") as fh:
        fh.write(report.to_csv())
    print(f"\nwrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
