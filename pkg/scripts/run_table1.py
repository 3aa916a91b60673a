#!/usr/bin/env python3
"""Refinement study on structured triangle meshes (example1, k = 0).

Reproduces the published five-level table: sigma error in L2 with rate 1,
u error in L2 with rate 2. Writes results/table1.csv and prints the table
plus the deviation from the built-in reference values.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from stagpoly.cli import TABLE1_REFERENCE
from stagpoly.polymesh import gen_uniform_triangles
from stagpoly.postprocess import convergence_study
from stagpoly.problems import example1


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    ap.add_argument("--degree", type=int, default=0)
    ap.add_argument("--quadrature", choices=["paper", "high"], default="paper")
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    meshes = [gen_uniform_triangles(n) for n in args.levels]
    report = convergence_study(example1(), meshes, k=args.degree,
                               mode=args.quadrature)
    print(report.format_table())

    print("\ndeviation from reference:")
    for row in report.rows:
        match = [r for r in TABLE1_REFERENCE if r[1] == row.n_cells]
        if not match:
            continue
        _, _, sig_ref, u_ref = match[0]
        dsig = (row.errors["e_sigma_L2"] - sig_ref) / sig_ref
        du = (row.errors["e_L2"] - u_ref) / u_ref
        print(f"  N_K={row.n_cells:6d}  sigma {100 * dsig:+.3f}%   "
              f"u {100 * du:+.3f}%")

    os.makedirs(args.outdir, exist_ok=True)
    out = os.path.join(args.outdir, "table1.csv")
    with open(out, "w") as fh:
        fh.write(report.to_csv())
    print(f"\nwrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
