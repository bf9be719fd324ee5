"""Dataset generation pipelines.

Classic path: draw coefficients and forcing, assemble, solve per sample.
Operator-action path (DiffOAS): solve once for a small pool of basis
solutions, then per sample combine them with normalized Gaussian weights,
add edge-decaying noise, and compute the forcing by a single sparse
matrix-vector product. Every emitted triple is consistent to SpMV rounding.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset_io import Dataset, DatasetManifest, read_dataset, write_dataset
from .fields import (
    GrfParams,
    RngStream,
    boundary_decay_mask,
    chebyshev_basis_field,
    fourier_basis_field,
    sample_grf,
    sample_uniform,
)
from .grid import FieldSample, Grid2D
from .grid_ops import CsrMatrix, PdeCoefficients, apply_operator
from .solvers import SolveOptions, gmres

DEFAULT_N_BASIS = {"darcy": 30, "helmholtz": 50, "diffusion": 50}
ABLATION_POOL_SIZES = {"grf": 30, "fourier": 100, "chebyshev": 100}
DIFFUSION_MIN_COEF = 0.1

# per-PDE field distributions
DARCY_GRF = GrfParams(tau=7.0, alpha=2.5)
DARCY_PERM_GRF = GrfParams(tau=7.0, alpha=2.5, transform="exp")
HELMHOLTZ_GRF = GrfParams(tau=3.0, alpha=2.0, scale=0.1)
DIFFUSION_COEF_GRF = GrfParams(tau=3.0, alpha=2.0, scale=10.0)
DIFFUSION_FORCING_GRF = GrfParams(tau=3.0, alpha=2.0)
NOISE_GRF = GrfParams(tau=3.0, alpha=2.0)


class GenerationError(RuntimeError):
    pass


class BasisConstructionError(GenerationError):
    pass


class DegenerateWeightsError(GenerationError):
    pass


@dataclass
class GenerationConfig:
    pde: str
    grid: Grid2D
    num_samples: int
    method: str = "diffoas"  # "diffoas" | "classic"
    solver_tol: float = 1e-5
    n_basis: Optional[int] = None
    noise_eta: float = 0.01
    weight_resample_threshold: Optional[float] = None
    master_seed: int = 0

    def __post_init__(self):
        if self.pde not in DEFAULT_N_BASIS:
            raise ValueError(f"unknown pde tag {self.pde!r}")
        if self.method not in ("diffoas", "classic"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.n_basis is None:
            self.n_basis = DEFAULT_N_BASIS[self.pde]
        if self.n_basis < 1:
            raise ValueError(f"n_basis must be >= 1, got {self.n_basis}")
        if self.noise_eta < 0:
            raise ValueError(f"noise_eta must be >= 0, got {self.noise_eta}")
        if self.weight_resample_threshold is None:
            self.weight_resample_threshold = 1e-3 * math.sqrt(self.n_basis)
        if self.weight_resample_threshold <= 0:
            raise ValueError("weight_resample_threshold must be positive")

    def field_params_dict(self) -> dict:
        if self.pde == "darcy":
            return {"a": DARCY_PERM_GRF.to_dict(), "f": DARCY_GRF.to_dict()}
        if self.pde == "helmholtz":
            return {"k2": HELMHOLTZ_GRF.to_dict(), "f": HELMHOLTZ_GRF.to_dict()}
        return {
            "k": {**DIFFUSION_COEF_GRF.to_dict(),
                  "shift_to_min": DIFFUSION_MIN_COEF},
            "q": {"distribution": "uniform", "lo": 0.0, "hi": 1.0},
            "f": DIFFUSION_FORCING_GRF.to_dict(),
        }


def draw_coefficients(pde: str, grid: Grid2D, gen: np.random.Generator) -> PdeCoefficients:
    """One draw of the coefficient fields for a PDE family."""
    if pde == "darcy":
        return PdeCoefficients("darcy", a=sample_grf(grid, DARCY_PERM_GRF, gen))
    if pde == "helmholtz":
        return PdeCoefficients("helmholtz", k2=sample_grf(grid, HELMHOLTZ_GRF, gen))
    k = sample_grf(grid, DIFFUSION_COEF_GRF, gen)
    low = k.values.min()
    if low < DIFFUSION_MIN_COEF:
        k = FieldSample(grid, k.values + (DIFFUSION_MIN_COEF - low))
    q = sample_uniform(grid, 0.0, 1.0, gen)
    return PdeCoefficients("diffusion", k=k, q=q)


def draw_forcing(pde: str, grid: Grid2D, gen: np.random.Generator) -> FieldSample:
    params = {"darcy": DARCY_GRF, "helmholtz": HELMHOLTZ_GRF,
              "diffusion": DIFFUSION_FORCING_GRF}[pde]
    return sample_grf(grid, params, gen)


@dataclass
class BasisPool:
    grid: Grid2D
    basis: list  # FieldSample solution functions, zero boundary trace
    provenance: list = dc_field(default_factory=list)
    key: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self._stack: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.basis)

    def stacked(self) -> np.ndarray:
        """(l, nodes^2) matrix of basis values, cached."""
        if self._stack is None:
            self._stack = np.stack([u.values.reshape(-1) for u in self.basis])
        return self._stack


def pool_cache_key(config: GenerationConfig) -> dict:
    return {
        "pde": config.pde,
        "grid_interior": config.grid.n_interior,
        "n_basis": config.n_basis,
        "solver_tol": config.solver_tol,
        "master_seed": config.master_seed,
    }


def build_basis_pool(config: GenerationConfig) -> BasisPool:
    """Solve n_basis systems at solver_tol; the solutions seed the pool."""
    grid = config.grid
    opts = SolveOptions(tol=config.solver_tol,
                        max_iter=min(grid.n_unknowns, 10000))
    basis, provenance = [], []
    for i in range(config.n_basis):
        gen = RngStream(config.master_seed, "basis_params", i).generator()
        coeffs = draw_coefficients(config.pde, grid, gen)
        forcing = draw_forcing(config.pde, grid, gen)
        A = coeffs.assemble()
        report = gmres(A, forcing.interior(),
                       opts=opts)
        if not report.converged:
            raise BasisConstructionError(
                f"basis solve {i} did not converge: relative residual "
                f"{report.final_relative_residual:.3e} after "
                f"{report.iterations} iterations"
            )
        basis.append(FieldSample.from_interior(grid, report.x))
        provenance.append({
            "index": i,
            "iterations": report.iterations,
            "relative_residual": report.final_relative_residual,
        })
    return BasisPool(grid, basis, provenance, pool_cache_key(config))


def save_basis_pool(pool: BasisPool, path: Path) -> None:
    np.savez(
        path,
        stack=pool.stacked(),
        key=np.frombuffer(repr(sorted(pool.key.items())).encode(), dtype=np.uint8),
    )


def load_basis_pool(path: Path, config: GenerationConfig) -> Optional[BasisPool]:
    if not path.is_file():
        return None
    try:
        data = np.load(path)
        key = bytes(data["key"]).decode()
    except Exception:
        return None
    if key != repr(sorted(pool_cache_key(config).items())):
        return None
    grid = config.grid
    m = grid.n_nodes
    basis = [FieldSample(grid, row.reshape(m, m)) for row in data["stack"]]
    return BasisPool(grid, basis, key=pool_cache_key(config))


def combine_solution(
    pool: BasisPool,
    rng_weights: RngStream,
    rng_noise: RngStream,
    eta: float,
    delta: float,
) -> FieldSample:
    """Normalized Gaussian-weighted combination of the pool plus masked noise."""
    if pool.size < 1:
        raise GenerationError("basis pool is empty")
    if eta < 0 or delta <= 0:
        raise GenerationError("need eta >= 0 and delta > 0")
    gen_w = rng_weights.generator()
    for _ in range(100):
        mu = gen_w.standard_normal(pool.size)
        total = mu.sum()
        if abs(total) >= delta:
            break
    else:
        raise DegenerateWeightsError(
            "100 consecutive weight draws below the resample threshold"
        )
    weights = mu / total
    grid = pool.grid
    m = grid.n_nodes
    u_comb = (weights @ pool.stacked()).reshape(m, m)
    if eta > 0:
        g = sample_grf(grid, NOISE_GRF, rng_noise)
        g_max = np.max(np.abs(g.values))
        noise = np.zeros((m, m)) if g_max == 0 else g.values / g_max
        amplitude = eta * np.max(np.abs(u_comb))
        u_comb = u_comb + amplitude * boundary_decay_mask(grid).values * noise
    return FieldSample(grid, u_comb)


def _base_manifest(config: GenerationConfig, method: str) -> DatasetManifest:
    return DatasetManifest(
        pde=config.pde,
        grid_interior=config.grid.n_interior,
        num_samples=config.num_samples,
        method=method,
        generation={
            "master_seed": config.master_seed,
            "solver_tol": config.solver_tol,
            "n_basis": config.n_basis,
            "noise_eta": config.noise_eta,
            "delta": config.weight_resample_threshold,
            "field_params": config.field_params_dict(),
            "sign_convention": "darcy assembled as -div(a grad u) (SPD)",
            "timings": {},
        },
    )


def _diffoas_sample(config: GenerationConfig, pool: BasisPool, k: int) -> dict:
    grid = config.grid
    gen = RngStream(config.master_seed, "sample_params", k).generator()
    coeffs = draw_coefficients(config.pde, grid, gen)
    A = coeffs.assemble()
    u = combine_solution(
        pool,
        RngStream(config.master_seed, "weights", k),
        RngStream(config.master_seed, "noise", k),
        config.noise_eta,
        config.weight_resample_threshold,
    )
    f = FieldSample.from_interior(grid, apply_operator(A, u.interior()))
    sample = {name: fs for name, fs in coeffs.field_map().items()}
    sample["f"] = f
    sample["u"] = u
    return sample


def _run_samples(worker, indices, threads: int):
    if threads <= 1:
        for k in indices:
            yield worker(k)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(worker, indices)


def generate_diffoas(
    config: GenerationConfig,
    out_dir: Path,
    threads: int = 1,
    pool: Optional[BasisPool] = None,
    basis_kind: Optional[str] = None,
) -> Dataset:
    """Operator-action generation; writes the dataset under out_dir.

    basis_kind switches the pool to an ablation basis ("grf", "fourier",
    "chebyshev"); None uses solved basis functions.
    """
    if config.method != "diffoas":
        raise GenerationError("generate_diffoas requires method='diffoas'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    if pool is None:
        if basis_kind is None:
            cache = out_dir / "basis_pool.npz"
            pool = load_basis_pool(cache, config)
            if pool is None:
                pool = build_basis_pool(config)
                save_basis_pool(pool, cache)
        else:
            pool = make_ablation_pool(config, basis_kind)
    basis_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    manifest = _base_manifest(
        config, "diffoas" if basis_kind is None else f"ablation-{basis_kind}")
    manifest.generation["pool_size"] = pool.size

    def worker(k: int) -> dict:
        return _diffoas_sample(config, pool, k)

    sample_iter = _run_samples(worker, range(config.num_samples), threads)
    manifest = write_dataset(out_dir, sample_iter, manifest)
    manifest.generation["timings"] = {
        "basis_seconds": basis_seconds,
        "action_seconds": time.perf_counter() - t1,
    }
    manifest = write_dataset_manifest_only(out_dir, manifest)
    return Dataset(out_dir, manifest)


def write_dataset_manifest_only(out_dir: Path, manifest: DatasetManifest):
    """Rewrite manifest.json (e.g. after filling in timings)."""
    tmp = Path(out_dir) / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    os.replace(tmp, Path(out_dir) / "manifest.json")
    return manifest


def generate_classic(
    config: GenerationConfig,
    out_dir: Path,
    threads: int = 1,
) -> Dataset:
    """Solve-per-sample generation at solver_tol."""
    if config.method != "classic":
        raise GenerationError("generate_classic requires method='classic'")
    out_dir = Path(out_dir)
    grid = config.grid
    opts = SolveOptions(tol=config.solver_tol,
                        max_iter=min(grid.n_unknowns, 10000))
    skipped = []
    t0 = time.perf_counter()

    def worker(k: int):
        gen = RngStream(config.master_seed, "sample_params", k).generator()
        coeffs = draw_coefficients(config.pde, grid, gen)
        forcing = draw_forcing(config.pde, grid, gen)
        A = coeffs.assemble()
        report = gmres(A, forcing.interior(), opts=opts)
        return k, coeffs, forcing, report

    def emit():
        for k, coeffs, forcing, report in _run_samples(
                worker, range(config.num_samples), threads):
            if not report.converged:
                skipped.append(k)
                continue
            sample = {name: fs for name, fs in coeffs.field_map().items()}
            sample["f"] = forcing
            sample["u"] = FieldSample.from_interior(grid, report.x)
            yield sample

    manifest = _base_manifest(config, "classic")
    manifest = write_dataset(out_dir, emit(), manifest)
    if manifest.num_samples == 0:
        raise GenerationError("all samples failed to converge")
    manifest.skipped_samples = skipped
    manifest.generation["timings"] = {
        "solve_seconds": time.perf_counter() - t0,
    }
    manifest = write_dataset_manifest_only(out_dir, manifest)
    return Dataset(out_dir, manifest)


def make_ablation_pool(config: GenerationConfig, basis_kind: str) -> BasisPool:
    """Ablation bases: masked raw GRF draws, sine modes, or windowed
    Chebyshev modes, with the pool sizes of the ablation study."""
    if basis_kind not in ABLATION_POOL_SIZES:
        raise GenerationError(f"unknown ablation basis {basis_kind!r}")
    grid = config.grid
    count = ABLATION_POOL_SIZES[basis_kind]
    if basis_kind == "grf":
        mask = boundary_decay_mask(grid).values
        basis = []
        for i in range(count):
            g = sample_grf(grid, DARCY_GRF,
                           RngStream(config.master_seed, "basis_params", i))
            basis.append(FieldSample(grid, g.values * mask))
    elif basis_kind == "fourier":
        basis = [fourier_basis_field(grid, i + 1) for i in range(count)]
    else:
        basis = [chebyshev_basis_field(grid, i + 1) for i in range(count)]
    return BasisPool(grid, basis, key={"ablation": basis_kind})


def generate_ablation(
    config: GenerationConfig,
    basis_kind: str,
    out_dir: Path,
    threads: int = 1,
) -> Dataset:
    return generate_diffoas(config, out_dir, threads, basis_kind=basis_kind)


@dataclass
class VerificationReport:
    num_samples: int
    max_relative_residual: float
    mean_relative_residual: float
    failing_indices: list
    tol: float

    @property
    def passed(self) -> bool:
        return not self.failing_indices


def verify_dataset(dataset: Dataset, tol: float) -> VerificationReport:
    """Re-assemble each sample's operator and measure ||A u - f|| / ||f||."""
    residuals = []
    failing = []
    grid = dataset.grid
    pde = dataset.manifest.pde
    for k, sample in enumerate(dataset.samples()):
        coeffs = PdeCoefficients(pde, **{
            name: sample[name]
            for name in dataset.manifest.field_names if name not in ("f", "u")
        })
        A = coeffs.assemble()
        f_int = sample["f"].interior()
        r = apply_operator(A, sample["u"].interior()) - f_int
        denom = max(float(np.linalg.norm(f_int)), 1e-300)
        rel = float(np.linalg.norm(r)) / denom
        residuals.append(rel)
        if rel > tol:
            failing.append(k)
    residuals = np.asarray(residuals)
    return VerificationReport(
        num_samples=len(residuals),
        max_relative_residual=float(residuals.max()) if residuals.size else 0.0,
        mean_relative_residual=float(residuals.mean()) if residuals.size else 0.0,
        failing_indices=failing,
        tol=tol,
    )
