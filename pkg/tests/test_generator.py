import json

import numpy as np
import pytest

from pdeforge.dataset_io import read_dataset
from pdeforge.fields import RngStream
from pdeforge.generator import (
    BasisPool,
    BasisConstructionError,
    DegenerateWeightsError,
    GenerationConfig,
    build_basis_pool,
    combine_solution,
    generate_ablation,
    generate_classic,
    generate_diffoas,
    verify_dataset,
)
from pdeforge.grid import FieldSample, Grid2D
from pdeforge.grid_ops import apply_operator
from pdeforge.solvers import SolveOptions, gmres


def small_config(**kw):
    defaults = dict(pde="darcy", grid=Grid2D(10), num_samples=4,
                    method="diffoas", n_basis=4, master_seed=21)
    defaults.update(kw)
    return GenerationConfig(**defaults)


def manifest_without_timings(path):
    manifest = json.loads((path / "manifest.json").read_text())
    manifest["generation"].pop("timings", None)
    return manifest


class TestConfig:
    def test_basis_defaults_per_pde(self):
        g = Grid2D(4)
        assert GenerationConfig("darcy", g, 1).n_basis == 30
        assert GenerationConfig("helmholtz", g, 1).n_basis == 50
        assert GenerationConfig("diffusion", g, 1).n_basis == 50

    def test_validation(self):
        g = Grid2D(4)
        with pytest.raises(ValueError):
            GenerationConfig("darcy", g, 0)
        with pytest.raises(ValueError):
            GenerationConfig("darcy", g, 1, n_basis=0)
        with pytest.raises(ValueError):
            GenerationConfig("burgers", g, 1)


class TestBasisPool:
    def test_single_basis_residual(self):
        config = small_config(grid=Grid2D(8), n_basis=1)
        pool = build_basis_pool(config)
        assert pool.size == 1
        # re-derive the system and recheck the stored solution's residual
        from pdeforge.generator import draw_coefficients, draw_forcing
        gen = RngStream(config.master_seed, "basis_params", 0).generator()
        coeffs = draw_coefficients("darcy", config.grid, gen)
        forcing = draw_forcing("darcy", config.grid, gen)
        A = coeffs.assemble()
        b = forcing.interior()
        r = apply_operator(A, pool.basis[0].interior()) - b
        assert np.linalg.norm(r) / np.linalg.norm(b) <= 1e-5

    def test_deterministic(self):
        config = small_config()
        p1 = build_basis_pool(config)
        p2 = build_basis_pool(config)
        np.testing.assert_array_equal(p1.stacked(), p2.stacked())

    def test_zero_boundary_traces(self):
        pool = build_basis_pool(small_config(n_basis=3))
        for u in pool.basis:
            assert u.boundary_max_abs() == 0.0

    def test_failed_solve_names_index(self):
        config = small_config(solver_tol=1e-13)
        config.solver_tol = 1e-13
        # an absurdly tight iteration cap forces failure
        from pdeforge import generator as gen_mod
        orig = gen_mod.gmres

        def crippled(A, b, x0=None, opts=None, **kw):
            return orig(A, b, x0, SolveOptions(tol=opts.tol, max_iter=1))

        gen_mod.gmres, saved = crippled, gen_mod.gmres
        try:
            with pytest.raises(BasisConstructionError, match="basis solve 0"):
                build_basis_pool(config)
        finally:
            gen_mod.gmres = saved


class TestCombine:
    def test_single_basis_eta_zero(self):
        g = Grid2D(6)
        u1 = FieldSample.from_interior(
            g, np.random.default_rng(1).standard_normal(36))
        pool = BasisPool(g, [u1])
        out = combine_solution(pool, RngStream(0, "weights", 0),
                               RngStream(0, "noise", 0), eta=0.0, delta=1e-3)
        np.testing.assert_array_equal(out.values, u1.values)

    def test_equal_weights_injected(self):
        g = Grid2D(4)
        gen = np.random.default_rng(2)
        u1 = FieldSample.from_interior(g, gen.standard_normal(16))
        u2 = FieldSample.from_interior(g, gen.standard_normal(16))
        pool = BasisPool(g, [u1, u2])
        # find a stream whose two draws are nearly equal is impractical;
        # instead check the affine identity sum(alpha) = 1 via reconstruction
        out = combine_solution(pool, RngStream(3, "weights", 5),
                               RngStream(3, "noise", 5), eta=0.0, delta=1e-3)
        # solve for the weights used and confirm they sum to 1
        basis = np.stack([u1.interior(), u2.interior()])
        w, *_ = np.linalg.lstsq(basis.T, out.interior(), rcond=None)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-12)

    def test_noise_bounded_and_boundary_zero(self):
        config = small_config(n_basis=5)
        pool = build_basis_pool(config)
        eta = 0.01
        out = combine_solution(pool, RngStream(7, "weights", 0),
                               RngStream(7, "noise", 0), eta=eta, delta=1e-3)
        base = combine_solution(pool, RngStream(7, "weights", 0),
                                RngStream(7, "noise", 0), eta=0.0, delta=1e-3)
        assert out.boundary_max_abs() == 0.0
        eps = out.values - base.values
        assert np.max(np.abs(eps)) <= eta * np.max(np.abs(base.values)) + 1e-15

    def test_degenerate_weights_error(self):
        g = Grid2D(3)
        pool = BasisPool(g, [FieldSample.constant(g, 0.0)])
        with pytest.raises(DegenerateWeightsError):
            # threshold so large every draw of one N(0,1) gets rejected
            combine_solution(pool, RngStream(1, "weights", 0),
                             RngStream(1, "noise", 0), eta=0.0, delta=1e9)


class TestDiffoas:
    def test_triples_exact(self, tmp_path):
        config = small_config(num_samples=3, noise_eta=0.0, n_basis=1)
        ds = generate_diffoas(config, tmp_path / "d")
        report = verify_dataset(ds, 1e-14)
        assert report.passed
        assert report.max_relative_residual <= 1e-14

    def test_verify_residuals(self, tmp_path):
        config = small_config(num_samples=6)
        ds = generate_diffoas(config, tmp_path / "d")
        report = verify_dataset(ds, 1e-12)
        assert report.passed

    def test_byte_identical_reruns(self, tmp_path):
        config = small_config()
        generate_diffoas(config, tmp_path / "a")
        generate_diffoas(config, tmp_path / "b")
        for name in ("a", "f", "u"):
            assert (tmp_path / "a" / f"{name}.f64").read_bytes() == \
                (tmp_path / "b" / f"{name}.f64").read_bytes()
        assert manifest_without_timings(tmp_path / "a") == \
            manifest_without_timings(tmp_path / "b")

    def test_thread_count_invariance(self, tmp_path):
        config = small_config(num_samples=8)
        generate_diffoas(config, tmp_path / "t1", threads=1)
        generate_diffoas(config, tmp_path / "t4", threads=4)
        for name in ("a", "f", "u"):
            assert (tmp_path / "t1" / f"{name}.f64").read_bytes() == \
                (tmp_path / "t4" / f"{name}.f64").read_bytes()

    def test_pool_cache_reused(self, tmp_path):
        config = small_config()
        generate_diffoas(config, tmp_path / "d")
        assert (tmp_path / "d" / "basis_pool.npz").exists()
        ds2 = generate_diffoas(config, tmp_path / "d")
        assert verify_dataset(ds2, 1e-12).passed

    def test_boundary_zero_everywhere(self, tmp_path):
        config = small_config(num_samples=5)
        ds = generate_diffoas(config, tmp_path / "d")
        for k in range(5):
            assert ds.field_sample("u", k).boundary_max_abs() == 0.0


class TestClassic:
    def test_residual_tracks_tolerance(self, tmp_path):
        maxima = []
        for tol in (1e-1, 1e-7):
            config = GenerationConfig("darcy", Grid2D(10), 5,
                                      method="classic", solver_tol=tol,
                                      master_seed=2)
            ds = generate_classic(config, tmp_path / f"c{tol:g}")
            rep = verify_dataset(ds, tol)
            assert rep.passed
            maxima.append(rep.max_relative_residual)
        assert maxima[1] < maxima[0] / 1e3

    def test_byte_identical_reruns(self, tmp_path):
        config = GenerationConfig("darcy", Grid2D(8), 3, method="classic",
                                  master_seed=5)
        generate_classic(config, tmp_path / "a")
        generate_classic(config, tmp_path / "b")
        for name in ("a", "f", "u"):
            assert (tmp_path / "a" / f"{name}.f64").read_bytes() == \
                (tmp_path / "b" / f"{name}.f64").read_bytes()

    def test_method_mismatch(self, tmp_path):
        with pytest.raises(Exception):
            generate_classic(small_config(), tmp_path / "x")


class TestAblation:
    @pytest.mark.parametrize("kind,size", [
        ("grf", 30), ("fourier", 100), ("chebyshev", 100)])
    def test_pool_sizes_and_validity(self, tmp_path, kind, size):
        config = small_config(num_samples=3)
        ds = generate_ablation(config, kind, tmp_path / kind)
        assert ds.manifest.generation["pool_size"] == size
        assert ds.manifest.method == f"ablation-{kind}"
        assert verify_dataset(ds, 1e-12).passed
        for k in range(3):
            assert ds.field_sample("u", k).boundary_max_abs() == 0.0


class TestVerify:
    def test_classic_fails_tight_tolerance(self, tmp_path):
        config = GenerationConfig("darcy", Grid2D(8), 3, method="classic",
                                  solver_tol=1e-5, master_seed=9)
        ds = generate_classic(config, tmp_path / "c")
        assert not verify_dataset(ds, 1e-12).passed
        assert verify_dataset(ds, 1e-4).passed

    def test_corrupted_file_raises(self, tmp_path):
        from pdeforge.dataset_io import DatasetIntegrityError
        config = small_config(num_samples=2)
        generate_diffoas(config, tmp_path / "d")
        path = tmp_path / "d" / "u.f64"
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DatasetIntegrityError):
            read_dataset(tmp_path / "d")
