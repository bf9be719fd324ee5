"""Krylov solvers: full (non-restarted) GMRES with iteration tracing, and CG.

GMRES runs Arnoldi with modified Gram-Schmidt (plus a selective second
orthogonalization pass when cancellation is detected) and solves the
least-squares problem incrementally with Givens rotations. The trace records, per
iteration, the recurrence residual norm, the Arnoldi subdiagonal h_{j+1,j},
and |y_j| from the square Hessenberg solve; the residual norm is bounded by
h_{j+1,j} * |y_j| (the square-system solve makes the bound exact up to
rounding), which verify_residual_bound checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid_ops import CsrMatrix, DimensionError, apply_operator

HAPPY_BREAKDOWN_REL = 1e-14


class NumericalBreakdownError(RuntimeError):
    pass


class NotSpdError(ValueError):
    pass


class MissingTraceError(ValueError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 2000
    record_trace: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class IterationRecord:
    j: int
    residual_norm: float
    h_subdiag: float
    y_last_abs: float


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    converged: bool
    final_relative_residual: float
    b_norm: float
    wall_time: float
    trace: Optional[list] = None
    arnoldi_basis: Optional[np.ndarray] = field(default=None, repr=False)


def _check_system(A: CsrMatrix, b: np.ndarray, x0):
    if A.nrows != A.ncols:
        raise DimensionError("solver requires a square matrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.nrows,):
        raise DimensionError("rhs length mismatch")
    if x0 is None:
        x0 = np.zeros(A.nrows)
    else:
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (A.nrows,):
            raise DimensionError("x0 length mismatch")
    return b, x0


def gmres(
    A: CsrMatrix,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    opts: SolveOptions = SolveOptions(),
    keep_basis: bool = False,
) -> SolveReport:
    """Full GMRES; terminates on relative true residual <= tol, happy
    breakdown, or max_iter."""
    t0 = time.perf_counter()
    b, x0 = _check_system(A, b, x0)
    n = A.nrows
    b_norm = float(np.linalg.norm(b))
    scale = b_norm if b_norm > 0 else 1.0

    r0 = b - apply_operator(A, x0)
    beta = float(np.linalg.norm(r0))
    trace: Optional[list] = [] if opts.record_trace else None
    if beta / scale <= opts.tol:
        return SolveReport(x0.copy(), 0, True, beta / scale, b_norm,
                           time.perf_counter() - t0, trace)

    frob = float(np.linalg.norm(A.values))
    breakdown_tol = HAPPY_BREAKDOWN_REL * frob

    m_cap = min(opts.max_iter, n)
    cap = min(64, m_cap + 1)
    V = np.empty((cap, n))
    V[0] = r0 / beta
    H = np.zeros((m_cap + 1, m_cap))  # rotated upper-triangular columns
    cs = np.zeros(m_cap)
    sn = np.zeros(m_cap)
    g = np.zeros(m_cap + 1)
    g[0] = beta

    def grow(j):
        nonlocal V, cap
        if j + 1 >= cap:
            cap = min(max(2 * cap, j + 2), m_cap + 1)
            V = np.resize(V, (cap, n))

    def solve_y(j):
        return np.linalg.solve(np.triu(H[: j + 1, : j + 1]), g[: j + 1])

    def finish(j, converged, relres):
        y = solve_y(j - 1) if j > 0 else np.zeros(0)
        x = x0 + V[:j].T @ y if j > 0 else x0.copy()
        basis = V[: j + 1].copy() if keep_basis else None
        return SolveReport(x, j, converged, relres, b_norm,
                           time.perf_counter() - t0, trace, basis)

    for j in range(m_cap):
        grow(j)
        w = apply_operator(A, V[j])
        if not np.all(np.isfinite(w)):
            raise NumericalBreakdownError(f"non-finite SpMV at iteration {j + 1}")
        norm_before = float(np.linalg.norm(w))
        h = np.zeros(j + 2)
        for i in range(j + 1):  # modified Gram-Schmidt
            h[i] = float(V[i] @ w)
            w -= h[i] * V[i]
        h[j + 1] = float(np.linalg.norm(w))
        if h[j + 1] < norm_before / np.sqrt(2.0):
            # heavy cancellation: one reorthogonalization pass (DGKS test)
            for i in range(j + 1):
                corr = float(V[i] @ w)
                h[i] += corr
                w -= corr * V[i]
            h[j + 1] = float(np.linalg.norm(w))
        h_subdiag = h[j + 1]
        happy = h_subdiag <= breakdown_tol

        # previous rotations act on rows 0..j only
        for i in range(j):
            hi, hi1 = h[i], h[i + 1]
            h[i] = cs[i] * hi + sn[i] * hi1
            h[i + 1] = -sn[i] * hi + cs[i] * hi1
        r_diag = h[j]  # pre-rotation diagonal of the square Hessenberg solve
        nu = float(np.hypot(h[j], h[j + 1]))
        if nu == 0.0:
            raise NumericalBreakdownError(f"zero Givens norm at iteration {j + 1}")
        cs[j], sn[j] = h[j] / nu, h[j + 1] / nu
        H[: j + 1, j] = h[: j + 1]
        H[j, j] = nu
        g_pre = g[j]
        g[j] = cs[j] * g_pre
        g[j + 1] = -sn[j] * g_pre
        res_norm = abs(g[j + 1])

        if trace is not None:
            y_last = abs(g_pre / r_diag) if r_diag != 0.0 else np.inf
            trace.append(IterationRecord(j + 1, res_norm, h_subdiag, y_last))

        if happy:
            rep = finish(j + 1, True, res_norm / scale)
            true_rel = float(np.linalg.norm(b - apply_operator(A, rep.x)) / scale)
            rep.final_relative_residual = true_rel
            rep.converged = true_rel <= opts.tol
            return rep

        grow(j)
        V[j + 1] = w / h_subdiag

        if res_norm / scale <= opts.tol:
            # guard against recurrence drift with an explicit residual
            rep = finish(j + 1, True, res_norm / scale)
            true_rel = float(np.linalg.norm(b - apply_operator(A, rep.x)) / scale)
            rep.final_relative_residual = true_rel
            if true_rel <= opts.tol:
                return rep

    rep = finish(m_cap, False, abs(g[m_cap]) / scale)
    true_rel = float(np.linalg.norm(b - apply_operator(A, rep.x)) / scale)
    rep.final_relative_residual = true_rel
    rep.converged = true_rel <= opts.tol
    return rep


def _spot_check_symmetry(A: CsrMatrix, pairs: int = 64):
    rng = np.random.default_rng(0)
    rows = np.repeat(np.arange(A.nrows), np.diff(A.row_ptr))
    if A.nnz == 0:
        return
    picks = rng.integers(0, A.nnz, size=min(pairs, A.nnz))
    for p in picks:
        i, j = int(rows[p]), int(A.col_idx[p])
        if abs(A.entry(i, j) - A.entry(j, i)) > 1e-12 * (1 + abs(A.entry(i, j))):
            raise NotSpdError(f"matrix asymmetric at ({i}, {j})")


def cg(
    A: CsrMatrix,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    opts: SolveOptions = SolveOptions(),
) -> SolveReport:
    """Conjugate Gradient for SPD systems."""
    t0 = time.perf_counter()
    b, x0 = _check_system(A, b, x0)
    _spot_check_symmetry(A)
    b_norm = float(np.linalg.norm(b))
    scale = b_norm if b_norm > 0 else 1.0
    x = x0.copy()
    r = b - apply_operator(A, x)
    p = r.copy()
    rs = float(r @ r)
    trace: Optional[list] = [] if opts.record_trace else None
    iterations = 0
    for j in range(1, opts.max_iter + 1):
        if np.sqrt(rs) / scale <= opts.tol:
            break
        Ap = apply_operator(A, p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NotSpdError(f"p^T A p = {pAp:g} <= 0 at iteration {j}")
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        iterations = j
        if trace is not None:
            trace.append(IterationRecord(j, float(np.sqrt(rs_new)), 0.0, 0.0))
        p = r + (rs_new / rs) * p
        rs = rs_new
    final = float(np.linalg.norm(b - apply_operator(A, x)) / scale)
    return SolveReport(x, iterations, final <= opts.tol, final, b_norm,
                       time.perf_counter() - t0, trace)


@dataclass
class BoundCheckResult:
    passed: bool
    max_violation: float
    per_iteration: list  # (j, residual_norm, bound, ok)


def verify_residual_bound(report: SolveReport) -> BoundCheckResult:
    """Check residual_norm <= h_subdiag * y_last_abs + slack per iteration."""
    if report.trace is None:
        raise MissingTraceError("report has no iteration trace")
    slack = 1e-10 * (1.0 + report.b_norm)
    rows = []
    max_violation = 0.0
    for rec in report.trace:
        bound = rec.h_subdiag * rec.y_last_abs
        violation = rec.residual_norm - bound
        ok = violation <= slack
        max_violation = max(max_violation, violation)
        rows.append((rec.j, rec.residual_norm, bound, ok))
    return BoundCheckResult(all(r[3] for r in rows), max_violation, rows)
