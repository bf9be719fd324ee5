"""Random scalar fields: spectral GRFs, uniform fields, ablation bases, masks.

The GRF is synthesized in a cosine basis with Matern-like amplitude decay
controlled by (tau, alpha):

    g(x, y) = sum_{k1,k2=0..K} lam_k xi_k phi_k(x, y),   xi_k ~ N(0,1)
    lam_k   = tau^(alpha-1) * (pi^2 |k|^2 + tau^2)^(-alpha/2)

with K = n_interior + 1, so the mode count matches the node count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as npcheb

from .grid import FieldSample, Grid2D


class FieldParameterError(ValueError):
    pass


ROLE_CODES = {
    "basis_params": 1,
    "sample_params": 2,
    "weights": 3,
    "noise": 4,
}


@dataclass(frozen=True)
class RngStream:
    """A named, counter-indexed random stream derived from one master seed.

    Distinct (role, index) pairs yield statistically independent generators;
    the output is a pure function of (master_seed, role, index), so sample
    generation parallelizes without any ordering dependence.
    """

    master_seed: int
    role: str
    index: int

    def __post_init__(self):
        if self.role not in ROLE_CODES:
            raise FieldParameterError(f"unknown stream role {self.role!r}")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(ROLE_CODES[self.role], self.index),
        )
        return np.random.Generator(np.random.Philox(ss))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise FieldParameterError(f"expected RngStream or Generator, got {type(rng)}")


@dataclass(frozen=True)
class GrfParams:
    tau: float
    alpha: float
    scale: float = 1.0
    offset: float = 0.0
    transform: str = "none"  # "none" | "exp"

    def __post_init__(self):
        if self.tau <= 0:
            raise FieldParameterError(f"tau must be positive, got {self.tau}")
        if self.alpha <= 1:
            raise FieldParameterError(
                f"alpha must exceed 1 for a trace-class 2D covariance, "
                f"got {self.alpha}"
            )
        if self.transform not in ("none", "exp"):
            raise FieldParameterError(f"unknown transform {self.transform!r}")

    def to_dict(self) -> dict:
        return {"tau": self.tau, "alpha": self.alpha, "scale": self.scale,
                "offset": self.offset, "transform": self.transform}


@lru_cache(maxsize=32)
def _cosine_table(n_interior: int) -> np.ndarray:
    """B[k, i] = c_k cos(pi k x_i) on the full node set, k = 0..K."""
    grid = Grid2D(n_interior)
    x = grid.node_coords()
    K = n_interior + 1
    k = np.arange(K + 1)
    B = np.cos(np.pi * np.outer(k, x))
    B[1:] *= np.sqrt(2.0)  # L2([0,1])-orthonormal scaling, c_0 = 1
    return B


@lru_cache(maxsize=64)
def _spectral_amplitudes(n_interior: int, tau: float, alpha: float) -> np.ndarray:
    K = n_interior + 1
    k = np.arange(K + 1)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return tau ** (alpha - 1.0) * (np.pi ** 2 * k2 + tau ** 2) ** (-alpha / 2.0)


def sample_grf(grid: Grid2D, params: GrfParams, rng) -> FieldSample:
    """One spectral GRF draw on the full node set."""
    gen = _as_generator(rng)
    lam = _spectral_amplitudes(grid.n_interior, params.tau, params.alpha)
    xi = gen.standard_normal(lam.shape)
    B = _cosine_table(grid.n_interior)
    values = B.T @ (lam * xi) @ B
    values = params.scale * values + params.offset
    if params.transform == "exp":
        values = np.exp(values)
    return FieldSample(grid, values)


def sample_uniform(grid: Grid2D, lo: float, hi: float, rng) -> FieldSample:
    """i.i.d. U[lo, hi) at every node."""
    if lo >= hi:
        raise FieldParameterError(f"need lo < hi, got [{lo}, {hi})")
    gen = _as_generator(rng)
    m = grid.n_nodes
    return FieldSample(grid, gen.uniform(lo, hi, size=(m, m)))


def _diagonal_pair(index: int, start: int) -> tuple[int, int]:
    """The index-th pair (k1, k2) with k1, k2 >= start, enumerated by
    ascending k1+k2 then ascending k1; index is 1-based."""
    if index < 1:
        raise FieldParameterError(f"basis index must be >= 1, got {index}")
    remaining = index - 1
    diag = 0  # k1 + k2 = 2*start + diag
    while remaining > diag:
        remaining -= diag + 1
        diag += 1
    k1 = start + remaining
    k2 = start + diag - remaining
    return k1, k2


def _sine_window(grid: Grid2D) -> np.ndarray:
    """sin(pi x) sin(pi y) on the node set, boundary forced to exact zero."""
    x = grid.node_coords()
    w = np.outer(np.sin(np.pi * x), np.sin(np.pi * x))
    w[0, :] = w[-1, :] = 0.0
    w[:, 0] = w[:, -1] = 0.0
    return w


def fourier_basis_field(grid: Grid2D, index: int) -> FieldSample:
    """sin(pi k1 x) sin(pi k2 y); zero boundary trace by construction."""
    k1, k2 = _diagonal_pair(index, start=1)
    x = grid.node_coords()
    v = np.outer(np.sin(np.pi * k1 * x), np.sin(np.pi * k2 * x))
    v[0, :] = v[-1, :] = 0.0
    v[:, 0] = v[:, -1] = 0.0
    return FieldSample(grid, v)


def chebyshev_basis_field(grid: Grid2D, index: int) -> FieldSample:
    """T_k1(2x-1) T_k2(2y-1) truncated by the sin*sin boundary window."""
    k1, k2 = _diagonal_pair(index, start=0)
    x = grid.node_coords()
    t = 2.0 * x - 1.0
    tx = npcheb.chebval(t, np.eye(k1 + 1)[k1])
    ty = npcheb.chebval(t, np.eye(k2 + 1)[k2])
    v = np.outer(tx, ty) * _sine_window(grid)
    return FieldSample(grid, v)


def boundary_decay_mask(grid: Grid2D) -> FieldSample:
    """Smooth bump sin(pi x) sin(pi y): 1 at the center, 0 on the boundary."""
    return FieldSample(grid, _sine_window(grid))
