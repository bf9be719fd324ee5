#!/usr/bin/env python3
"""Time per-sample operator action against GMRES solves across problem
sizes and fit the speedup trend.

Example:
    python scripts/speedup_experiment.py --dims 2500,4900,8100,10000 \
        --out speedup.csv
"""

import argparse
import sys
from pathlib import Path

from pdeforge.bench import emit_report, fit_speedup_regression, run_timing_suite


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pde", default="darcy",
                    choices=["darcy", "helmholtz", "diffusion"])
    ap.add_argument("--dims", default="2500,4900,8100,10000",
                    help="comma-separated matrix dims (perfect squares)")
    ap.add_argument("--tol", type=float, default=1e-5)
    ap.add_argument("--samples", type=int, default=5)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--basis", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--format", default="csv", choices=["csv", "json"])
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    dims = [int(d) for d in args.dims.split(",")]
    records = run_timing_suite(args.pde, dims, tols=[args.tol],
                               samples_per_point=args.samples,
                               repeats=args.repeats, master_seed=args.seed,
                               n_basis=args.basis)
    fit = fit_speedup_regression(records, args.tol) if len(dims) >= 3 else None
    Path(args.out).write_text(emit_report(records, fit, args.format, args.pde))

    if fit is not None:
        for dim, speedup in fit.points:
            print(f"dim {dim:>7d}  speedup {speedup:10.1f}x")
        print(f"slope {fit.slope:.4f}  intercept {fit.intercept:.1f}  "
              f"pearson r {fit.pearson_r:.3f}")
    print(f"report written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
