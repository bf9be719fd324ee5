"""PDE training-data generation toolkit.

Two pipelines over 2D zero-Dirichlet finite-difference problems (Darcy,
Helmholtz, diffusion-reaction): the classic draw-and-solve path, and an
operator-action path that combines pre-solved basis solutions and computes
forcings by sparse matrix-vector product, giving machine-precision data at
a fraction of the solve cost. Includes dataset IO with integrity checks and
a benchmark harness for the speedup analysis.
"""

from .fields import (
    GrfParams,
    RngStream,
    boundary_decay_mask,
    chebyshev_basis_field,
    fourier_basis_field,
    sample_grf,
    sample_uniform,
)
from .generator import (
    BasisPool,
    GenerationConfig,
    build_basis_pool,
    combine_solution,
    generate_ablation,
    generate_classic,
    generate_diffoas,
    verify_dataset,
)
from .grid import FieldSample, Grid2D
from .grid_ops import (
    CsrMatrix,
    PdeCoefficients,
    apply_operator,
    assemble_darcy,
    assemble_diffusion_reaction,
    assemble_helmholtz,
    assemble_helmholtz_paper_normalized,
    dense_solve,
)
from .solvers import (
    SolveOptions,
    SolveReport,
    cg,
    gmres,
    verify_residual_bound,
)

__version__ = "0.1.0"
