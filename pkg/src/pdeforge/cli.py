"""Command-line front end: generate, verify, bench, inspect.

Exit codes: 0 success, 1 verification/lookup failure, 2 generation error,
3 I/O or integrity error, 64 usage error. Phase timings go to stderr as
JSON lines so stdout stays pipeable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    BenchConfigError,
    emit_report,
    fit_speedup_regression,
    run_timing_suite,
)
from .dataset_io import DatasetFormatError, DatasetIntegrityError, read_dataset
from .generator import (
    GenerationConfig,
    GenerationError,
    generate_ablation,
    generate_classic,
    generate_diffoas,
    verify_dataset,
)
from .grid import Grid2D

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_GENERATION = 2
EXIT_IO = 3
EXIT_USAGE = 64

METHODS = ("diffoas", "classic", "ablation-grf", "ablation-fourier",
           "ablation-chebyshev")
PDES = ("darcy", "helmholtz", "diffusion")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _telemetry(**kwargs):
    print(json.dumps(kwargs), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdeforge",
                     description="PDE training-data generation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset")
    g.add_argument("--method", choices=METHODS, default="diffoas",
                   help="generation pipeline (default: diffoas)")
    g.add_argument("--pde", choices=PDES, default="darcy",
                   help="PDE family (default: darcy)")
    g.add_argument("--grid", type=int, default=50, metavar="N_INTERIOR",
                   help="interior grid size per axis (default: 50)")
    g.add_argument("--samples", type=int, default=100,
                   help="number of samples (default: 100)")
    g.add_argument("--basis", type=int, default=None,
                   help="basis pool size (default: 30 darcy, 50 others)")
    g.add_argument("--tol", type=float, default=1e-5,
                   help="solver tolerance (default: 1e-5)")
    g.add_argument("--eta", type=float, default=0.01,
                   help="noise amplitude factor (default: 0.01)")
    g.add_argument("--seed", type=int, default=0,
                   help="master seed (default: 0)")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--threads", type=int, default=1,
                   help="generation threads (default: 1)")

    v = sub.add_parser("verify", help="re-check dataset residuals")
    v.add_argument("--data", required=True, help="dataset directory")
    v.add_argument("--tol", type=float, default=1e-12,
                   help="pass/fail relative-residual tolerance "
                        "(default: 1e-12)")

    b = sub.add_parser("bench", help="timing suite and speedup regression")
    b.add_argument("--pde", choices=PDES, default="darcy",
                   help="PDE family (default: darcy)")
    b.add_argument("--dims", default="2500,10000",
                   help="comma-separated matrix dims, each a perfect square "
                        "(default: 2500,10000)")
    b.add_argument("--tols", default="1e-1,1e-3,1e-5",
                   help="comma-separated GMRES tolerances "
                        "(default: 1e-1,1e-3,1e-5)")
    b.add_argument("--samples", type=int, default=10,
                   help="samples per timing point (default: 10)")
    b.add_argument("--repeats", type=int, default=3,
                   help="timing repeats, median reported (default: 3)")
    b.add_argument("--basis", type=int, default=None,
                   help="basis pool size (default: per-PDE)")
    b.add_argument("--seed", type=int, default=0,
                   help="master seed (default: 0)")
    b.add_argument("--cg", action="store_true",
                   help="also time CG (SPD problems)")
    b.add_argument("--regress-tol", type=float, default=None,
                   help="tolerance for the speedup regression "
                        "(default: last of --tols)")
    b.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="report format (default: csv)")
    b.add_argument("--out", required=True, help="report output file")

    i = sub.add_parser("inspect", help="print manifest and field stats")
    i.add_argument("--data", required=True, help="dataset directory")
    i.add_argument("--sample", type=int, default=None,
                   help="sample index to inspect (default: none)")
    i.add_argument("--field", default=None,
                   help="field name to inspect (default: none)")
    i.add_argument("--stats", action="store_true",
                   help="print per-field summary statistics")
    return parser


def _field_stats(fs) -> dict:
    return {
        "min": float(fs.values.min()),
        "max": float(fs.values.max()),
        "mean": float(fs.values.mean()),
        "boundary_max_abs": fs.boundary_max_abs(),
    }


def cmd_generate(args) -> int:
    if args.samples < 1:
        _usage_error("--samples must be >= 1")
    if args.threads < 1:
        _usage_error("--threads must be >= 1")
    try:
        grid = Grid2D(args.grid)
        config = GenerationConfig(
            pde=args.pde, grid=grid, num_samples=args.samples,
            method="classic" if args.method == "classic" else "diffoas",
            solver_tol=args.tol, n_basis=args.basis,
            noise_eta=args.eta, master_seed=args.seed,
        )
    except ValueError as exc:
        _usage_error(str(exc))
    try:
        if args.method == "classic":
            dataset = generate_classic(config, Path(args.out), args.threads)
        elif args.method == "diffoas":
            dataset = generate_diffoas(config, Path(args.out), args.threads)
        else:
            kind = args.method.removeprefix("ablation-")
            dataset = generate_ablation(config, kind, Path(args.out),
                                        args.threads)
    except GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    timings = dataset.manifest.generation.get("timings", {})
    _telemetry(event="generate-done", out=str(args.out),
               samples=dataset.manifest.num_samples,
               skipped=len(dataset.manifest.skipped_samples), **timings)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        dataset = read_dataset(args.data)
        report = verify_dataset(dataset, args.tol)
    except (DatasetIntegrityError, OSError) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DatasetFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps({
        "samples": report.num_samples,
        "max_relative_residual": report.max_relative_residual,
        "mean_relative_residual": report.mean_relative_residual,
        "tol": report.tol,
        "failing_indices": report.failing_indices[:32],
        "passed": report.passed,
    }, indent=2))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bench(args) -> int:
    try:
        dims = [int(d) for d in args.dims.split(",") if d]
        tols = [float(t) for t in args.tols.split(",") if t]
    except ValueError:
        _usage_error("--dims and --tols must be comma-separated numbers")
    if args.samples < 1:
        _usage_error("--samples must be >= 1")
    try:
        records = run_timing_suite(
            args.pde, dims, tols, args.samples, args.repeats,
            master_seed=args.seed, n_basis=args.basis, include_cg=args.cg,
        )
        regress_tol = args.regress_tol if args.regress_tol is not None \
            else tols[-1]
        try:
            regression = fit_speedup_regression(records, regress_tol)
        except BenchConfigError:
            regression = None  # too few dims: report records only
        text = emit_report(records, regression, args.format, pde=args.pde)
    except BenchConfigError as exc:
        _usage_error(str(exc))
    try:
        Path(args.out).write_text(text)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    flagged = [r for r in records if r.method != "diffoas_total" and r.flags]
    if flagged:
        _telemetry(event="bench-warnings",
                   flagged=[(r.method, r.matrix_dim, r.flags)
                            for r in flagged])
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        dataset = read_dataset(args.data)
    except (DatasetIntegrityError, DatasetFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest = dataset.manifest
    out = {
        "pde": manifest.pde,
        "method": manifest.method,
        "grid_interior": manifest.grid_interior,
        "num_samples": manifest.num_samples,
        "fields": list(manifest.field_names),
        "skipped_samples": manifest.skipped_samples,
    }
    if args.stats:
        k = args.sample if args.sample is not None else 0
        names = [args.field] if args.field else list(manifest.field_names)
        try:
            out["stats"] = {
                name: _field_stats(dataset.field_sample(name, k))
                for name in names
            }
        except DatasetFormatError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
    elif args.sample is not None or args.field:
        k = args.sample if args.sample is not None else 0
        name = args.field or "u"
        try:
            fs = dataset.field_sample(name, k)
        except DatasetFormatError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        out["sample"] = {"index": k, "field": name,
                         "num_values": int(fs.values.size),
                         **_field_stats(fs)}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _usage_error(message: str):
    print(f"pdeforge: error: {message}", file=sys.stderr)
    raise SystemExit(EXIT_USAGE)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "generate": cmd_generate,
        "verify": cmd_verify,
        "bench": cmd_bench,
        "inspect": cmd_inspect,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
