#!/usr/bin/env python3
"""Measure how basis-pool construction and per-sample operator action
scale with dataset size N.

The pool cost should stay flat while the action phase grows linearly.

Example:
    python scripts/phase_split_experiment.py --grid 32 --sizes 100,400,1600
"""

import argparse
import sys
import tempfile
from pathlib import Path

from pdeforge import GenerationConfig, Grid2D, generate_diffoas


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pde", default="darcy",
                    choices=["darcy", "helmholtz", "diffusion"])
    ap.add_argument("--grid", type=int, default=32,
                    help="interior grid size per axis")
    ap.add_argument("--sizes", default="100,400,1600",
                    help="comma-separated dataset sizes N")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"{'N':>7s} {'basis (s)':>12s} {'action (s)':>12s} "
          f"{'action/sample (ms)':>20s}")
    with tempfile.TemporaryDirectory() as tmp:
        for n_samples in sizes:
            cfg = GenerationConfig(args.pde, Grid2D(args.grid), n_samples,
                                   master_seed=args.seed)
            ds = generate_diffoas(cfg, Path(tmp) / f"n{n_samples}")
            t = ds.manifest.generation["timings"]
            print(f"{n_samples:>7d} {t['basis_seconds']:>12.3f} "
                  f"{t['action_seconds']:>12.3f} "
                  f"{1e3 * t['action_seconds'] / n_samples:>20.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
