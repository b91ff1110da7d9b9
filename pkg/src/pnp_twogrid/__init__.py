"""Finite element and two-grid solvers for the steady Poisson-Nernst-Planck equations."""
from .assembly import (
    SparseMatrix,
    apply_dirichlet,
    assemble_drift_matrix,
    assemble_drift_rhs,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    expand,
)
from .linalg import SolveReport, SolverConfig, SolverError, l2_vec, solve_bicgstab, solve_cg
from .mesh import Mesh, NodalField, build_unit_cube_mesh, locate_point, prolongate
from .pnp import (
    ConvergenceError,
    GummelConfig,
    PnpState,
    gummel_solve,
    run_algorithm,
    two_grid_I,
    two_grid_II,
    two_grid_III,
    two_grid_IV,
)
from .verification import (
    ErrorReport,
    ManufacturedSolution,
    compute_errors,
    error_h1,
    error_l2,
    source_terms,
    theorem_probe,
)

__version__ = "0.1.0"
