"""Timing harness: generation cost vs matrix size vs solver tolerance.

Assembly and coefficient drawing are timed separately and excluded from both
methods' phases, so the GMRES-vs-action speedup compares solve time against
combine+SpMV time like for like. Medians over >= 3 repeats with one
discarded warm-up; phases too short for the clock trigger automatic
sample-count escalation.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy.stats

from .fields import RngStream
from .generator import (
    BasisPool,
    GenerationConfig,
    build_basis_pool,
    combine_solution,
    draw_coefficients,
    draw_forcing,
)
from .grid import Grid2D
from .grid_ops import apply_operator
from .solvers import SolveOptions, cg, gmres

MIN_PHASE_SECONDS = 1e-4  # ~100 ticks of a ~1us-resolution wall clock
MAX_ESCALATIONS = 6


class BenchConfigError(ValueError):
    pass


@dataclass
class BenchRecord:
    matrix_dim: int
    method: str  # diffoas_total | diffoas_action | gmres | cg
    tol: Optional[float]
    samples: int
    wall_seconds: float  # median over repeats
    repeats: int
    per_repeat: list = dc_field(default_factory=list)
    flags: list = dc_field(default_factory=list)

    def per_sample_seconds(self) -> float:
        return self.wall_seconds / max(self.samples, 1)


@dataclass
class RegressionResult:
    slope: float
    intercept: float
    pearson_r: float
    points: list  # (matrix_dim, speedup_ratio)
    degenerate: bool = False


def _interior_from_dim(dim: int) -> int:
    n = math.isqrt(dim)
    if n * n != dim:
        raise BenchConfigError(
            f"matrix dim {dim} is not the square of an interior grid size"
        )
    return n


def _median(xs):
    return float(np.median(xs))


def _time_solver_phase(systems, solver, tol, max_iter):
    """Seconds to solve the prepared systems, solve time only."""
    opts = SolveOptions(tol=tol, max_iter=max_iter)
    flags = []
    t0 = time.perf_counter()
    for A, b in systems:
        report = solver(A, b, opts=opts)
        if not report.converged:
            flags.append(f"non-convergence at relres "
                         f"{report.final_relative_residual:.2e}")
    return time.perf_counter() - t0, flags


def _time_action_phase(config, pool, systems, n_samples):
    """Seconds for combine + SpMV over n_samples, reusing prepared systems."""
    t0 = time.perf_counter()
    for k in range(n_samples):
        A, _ = systems[k % len(systems)]
        u = combine_solution(
            pool,
            RngStream(config.master_seed, "weights", k),
            RngStream(config.master_seed, "noise", k),
            config.noise_eta,
            config.weight_resample_threshold,
        )
        apply_operator(A, u.interior())
    return time.perf_counter() - t0


def run_timing_suite(
    pde: str,
    dims: list,
    tols: list,
    samples_per_point: int,
    repeats: int,
    master_seed: int = 0,
    n_basis: Optional[int] = None,
    include_cg: bool = False,
) -> list:
    """BenchRecords for DiffOAS (total and action-only) and GMRES at each
    (dim, tol); optionally CG for SPD problems."""
    if samples_per_point < 1:
        raise BenchConfigError("samples_per_point must be >= 1")
    if repeats < 3:
        raise BenchConfigError("repeats must be >= 3")
    records = []
    for dim in dims:
        n_int = _interior_from_dim(dim)
        grid = Grid2D(n_int)
        config = GenerationConfig(
            pde=pde, grid=grid, num_samples=samples_per_point,
            method="diffoas", master_seed=master_seed,
            n_basis=n_basis,
        )
        max_iter = min(grid.n_unknowns, 10000)

        # prepare systems once per dim; assembly is deliberately untimed
        systems = []
        for k in range(samples_per_point):
            gen = RngStream(master_seed, "sample_params", k).generator()
            coeffs = draw_coefficients(pde, grid, gen)
            forcing = draw_forcing(pde, grid, gen)
            systems.append((coeffs.assemble(), forcing.interior()))

        t_pool = time.perf_counter()
        pool = build_basis_pool(config)
        basis_seconds = time.perf_counter() - t_pool

        # warm-up, then timed repeats, escalating if below clock resolution
        n_action = samples_per_point
        for _ in range(MAX_ESCALATIONS):
            if _time_action_phase(config, pool, systems, n_action) \
                    >= MIN_PHASE_SECONDS:
                break
            n_action *= 10
        action_times = [
            _time_action_phase(config, pool, systems, n_action)
            for _ in range(repeats)
        ]
        records.append(BenchRecord(dim, "diffoas_action", None, n_action,
                                   _median(action_times), repeats,
                                   action_times))
        records.append(BenchRecord(
            dim, "diffoas_total", None, n_action,
            basis_seconds + _median(action_times), repeats,
            [basis_seconds + t for t in action_times],
            flags=[f"basis_seconds={basis_seconds:.6g}"]))

        for tol in tols:
            _time_solver_phase(systems[:1], gmres, tol, max_iter)  # warm-up
            runs, flags = [], []
            for _ in range(repeats):
                secs, fl = _time_solver_phase(systems, gmres, tol, max_iter)
                runs.append(secs)
                flags.extend(fl)
            records.append(BenchRecord(dim, "gmres", tol, samples_per_point,
                                       _median(runs), repeats, runs,
                                       sorted(set(flags))))
            if include_cg:
                runs, flags = [], []
                for _ in range(repeats):
                    secs, fl = _time_solver_phase(systems, cg, tol, max_iter)
                    runs.append(secs)
                    flags.extend(fl)
                records.append(BenchRecord(dim, "cg", tol, samples_per_point,
                                           _median(runs), repeats, runs,
                                           sorted(set(flags))))
    return records


def fit_speedup_regression(records: list, solver_tol: float) -> RegressionResult:
    """Least-squares line of per-sample GMRES/action speedup against dim."""
    by_dim = {}
    for rec in records:
        if rec.method == "gmres" and rec.tol == solver_tol:
            by_dim.setdefault(rec.matrix_dim, {})["gmres"] = rec
        elif rec.method == "diffoas_action":
            by_dim.setdefault(rec.matrix_dim, {})["action"] = rec
    points = []
    for dim in sorted(by_dim):
        pair = by_dim[dim]
        if "gmres" not in pair or "action" not in pair:
            continue
        action = pair["action"].per_sample_seconds()
        if action <= 0.0:
            raise BenchConfigError(
                f"zero action time at dim {dim}; increase samples_per_point"
            )
        points.append((dim, pair["gmres"].per_sample_seconds() / action))
    if len(points) < 3:
        raise BenchConfigError(
            f"need >= 3 dims with both methods at tol {solver_tol}, "
            f"got {len(points)}"
        )
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.ptp(y) == 0.0:
        return RegressionResult(0.0, float(y[0]), 0.0, points, degenerate=True)
    fit = scipy.stats.linregress(x, y)
    return RegressionResult(float(fit.slope), float(fit.intercept),
                            float(fit.rvalue), points)


CSV_COLUMNS = ["method", "pde", "dim", "tol", "samples", "repeats",
               "median_seconds"]


def emit_report(
    records: list,
    regression: Optional[RegressionResult],
    fmt: str,
    pde: str = "",
) -> str:
    """Render records (+ optional regression footer) as csv or json text."""
    if fmt == "json":
        payload = {
            "records": [
                {"method": r.method, "pde": pde, "dim": r.matrix_dim,
                 "tol": r.tol, "samples": r.samples, "repeats": r.repeats,
                 "median_seconds": r.wall_seconds, "per_repeat": r.per_repeat,
                 "flags": r.flags}
                for r in records
            ],
        }
        if regression is not None:
            payload["regression"] = {
                "slope": regression.slope,
                "intercept": regression.intercept,
                "pearson_r": regression.pearson_r,
                "points": regression.points,
                "degenerate": regression.degenerate,
            }
        return json.dumps(payload, indent=2)
    if fmt != "csv":
        raise BenchConfigError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([r.method, pde, r.matrix_dim,
                         "" if r.tol is None else r.tol,
                         r.samples, r.repeats, f"{r.wall_seconds:.9g}"])
    if regression is not None:
        writer.writerow(["regression_slope", pde, "", "", "", "",
                         f"{regression.slope:.9g}"])
        writer.writerow(["regression_pearson_r", pde, "", "", "", "",
                         f"{regression.pearson_r:.9g}"])
    return buf.getvalue()
