import numpy as np
import pytest

from pdeforge.fields import GrfParams, RngStream, sample_grf
from pdeforge.grid import FieldSample, Grid2D
from pdeforge.grid_ops import (
    CsrMatrix,
    DimensionError,
    apply_operator,
    assemble_darcy,
    assemble_helmholtz,
    assemble_helmholtz_paper_normalized,
    dense_solve,
)
from pdeforge.solvers import (
    MissingTraceError,
    NotSpdError,
    SolveOptions,
    cg,
    gmres,
    verify_residual_bound,
)


def darcy_system(n, seed, lognormal=True):
    g = Grid2D(n)
    params = GrfParams(tau=7.0, alpha=2.5,
                       transform="exp" if lognormal else "none")
    a = sample_grf(g, params, RngStream(seed, "basis_params", 0))
    A = assemble_darcy(g, a)
    b = sample_grf(g, GrfParams(tau=7.0, alpha=2.5),
                   RngStream(seed, "basis_params", 1)).interior()
    return A, b


class TestGmres:
    def test_identity_one_iteration(self):
        A = CsrMatrix.identity(6)
        b = np.arange(1.0, 7.0)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-12))
        assert rep.converged and rep.iterations == 1
        np.testing.assert_allclose(rep.x, b, rtol=1e-12)

    def test_paper_system(self):
        A = assemble_helmholtz_paper_normalized(Grid2D(2), 0.0)
        b = np.full(4, -2.0)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-10))
        assert rep.converged
        np.testing.assert_allclose(rep.x, np.ones(4), atol=1e-8)
        np.testing.assert_allclose(rep.x, dense_solve(A, b), atol=1e-8)

    def test_darcy_matches_dense(self):
        A, b = darcy_system(10, 42)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-7))
        assert rep.converged
        r = apply_operator(A, rep.x) - b
        assert np.linalg.norm(r) / np.linalg.norm(b) <= 1e-7
        xd = dense_solve(A, b)
        assert np.linalg.norm(rep.x - xd) / np.linalg.norm(xd) <= 1e-5

    def test_zero_rhs(self):
        A = CsrMatrix.identity(4)
        rep = gmres(A, np.zeros(4), opts=SolveOptions(tol=1e-10))
        assert rep.converged and rep.iterations == 0
        np.testing.assert_array_equal(rep.x, np.zeros(4))

    def test_nonconvergence_reported_not_raised(self):
        A, b = darcy_system(8, 3)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-12, max_iter=3))
        assert not rep.converged
        assert rep.iterations <= 3

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            gmres(CsrMatrix.identity(3), np.ones(4))

    def test_residual_monotonicity(self):
        A, b = darcy_system(9, 17)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-12, record_trace=True))
        res = [r.residual_norm for r in rep.trace]
        for later, earlier in zip(res[1:], res[:-1]):
            assert later <= earlier + 1e-12

    def test_arnoldi_orthogonality(self):
        A, b = darcy_system(12, 5)  # n = 144 <= 256
        rep = gmres(A, b, opts=SolveOptions(tol=1e-12, record_trace=True),
                    keep_basis=True)
        V = rep.arnoldi_basis
        G = V @ V.T
        assert np.max(np.abs(G - np.eye(len(G)))) <= 1e-8

    def test_happy_breakdown_invariant_subspace(self):
        # b in a 2-dimensional invariant subspace of a diagonal matrix
        vals = np.array([2.0, 2.0, 3.0, 5.0])
        A = CsrMatrix(4, 4, np.arange(5), np.arange(4), vals)
        b = np.array([1.0, 1.0, 1.0, 0.0])  # spans eigenvalues {2, 3}
        rep = gmres(A, b, opts=SolveOptions(tol=1e-10))
        assert rep.converged
        assert rep.iterations <= 2
        np.testing.assert_allclose(rep.x, b / vals, atol=1e-10)

    def test_x0_respected(self):
        A, b = darcy_system(6, 8)
        x_star = dense_solve(A, b)
        rep = gmres(A, b, x0=x_star, opts=SolveOptions(tol=1e-8))
        assert rep.converged and rep.iterations == 0


class TestResidualBound:
    def test_identity_trace(self):
        A = CsrMatrix.identity(5)
        rep = gmres(A, np.ones(5),
                    opts=SolveOptions(tol=1e-12, record_trace=True))
        check = verify_residual_bound(rep)
        assert check.passed
        assert check.max_violation <= 1e-10 * (1 + rep.b_norm)

    def test_paper_system_trace(self):
        A = assemble_helmholtz_paper_normalized(Grid2D(2), 0.0)
        rep = gmres(A, np.full(4, -2.0),
                    opts=SolveOptions(tol=1e-10, record_trace=True))
        assert verify_residual_bound(rep).passed

    def test_darcy_trace(self):
        A, b = darcy_system(10, 23)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-7, record_trace=True))
        check = verify_residual_bound(rep)
        assert check.passed
        assert len(check.per_iteration) == rep.iterations

    def test_missing_trace(self):
        rep = gmres(CsrMatrix.identity(3), np.ones(3))
        with pytest.raises(MissingTraceError):
            verify_residual_bound(rep)


class TestCg:
    def test_scaled_identity(self):
        A = CsrMatrix(3, 3, np.arange(4), np.arange(3), np.full(3, 2.0))
        b = np.array([2.0, 4.0, 6.0])
        rep = cg(A, b, opts=SolveOptions(tol=1e-12))
        assert rep.converged and rep.iterations == 1
        np.testing.assert_allclose(rep.x, b / 2.0, rtol=1e-12)

    def test_darcy_matches_dense(self):
        g = Grid2D(3)
        A = assemble_darcy(g, FieldSample.constant(g, 1.0))
        b = np.ones(9)
        rep = cg(A, b, opts=SolveOptions(tol=1e-12))
        xd = dense_solve(A, b)
        assert np.linalg.norm(rep.x - xd) / np.linalg.norm(xd) <= 1e-8

    def test_iteration_bound_lognormal(self):
        A, b = darcy_system(8, 31)
        rep = cg(A, b, opts=SolveOptions(tol=1e-10, max_iter=128))
        assert rep.converged
        assert rep.iterations <= 2 * 64  # exact-arithmetic bound, 2x slack

    def test_rejects_asymmetric(self):
        A = CsrMatrix(2, 2, np.array([0, 2, 3]), np.array([0, 1, 1]),
                      np.array([2.0, 1.0, 2.0]))
        with pytest.raises(NotSpdError):
            cg(A, np.ones(2))

    def test_rejects_indefinite(self):
        g = Grid2D(4)
        k2 = FieldSample.constant(g, 0.0)
        A = assemble_helmholtz(g, k2)  # negative-definite
        with pytest.raises(NotSpdError):
            cg(A, np.ones(16), opts=SolveOptions(tol=1e-10))


class TestOracleEquivalence:
    @pytest.mark.parametrize("n,seed", [(4, 0), (8, 1), (16, 2), (25, 3)])
    def test_gmres_vs_dense(self, n, seed):
        A, b = darcy_system(n, seed)
        rep = gmres(A, b, opts=SolveOptions(tol=1e-12,
                                            max_iter=A.nrows))
        xd = dense_solve(A, b)
        assert np.linalg.norm(rep.x - xd) / np.linalg.norm(xd) <= 1e-6
