"""Space-time discontinuous Galerkin solver for the Allen-Cahn equation.

dG(k) time stepping on a partition of (0, T] combined with conforming
Lagrange elements of degree l on structured interval or unit-square meshes,
plus the companion solvers (backward dual, auxiliary psi problem, parabolic
and slab-local projections) and diagnostics (exact discrete identities,
spectrum traces, convergence and stability studies) used to verify it.
"""

from .mesh import Mesh, build_interval_mesh, build_square_mesh, mesh_to_json
from .space import FeSpace, build_space
from .assembly import SpaceOperators
from .linalg import (
    LinearSolveConfig,
    LinearSolveError,
    EigenResult,
    coo_to_csr,
    solve_linear,
    smallest_generalized_eigenvalue,
    dump_matrix_market,
)
from .timebase import TimePartition, TimeBasis, DgTimeOperators, make_time_basis
from .characteristic import (
    CharacteristicPoly,
    discrete_characteristic,
    characteristic_transfer_matrix,
    characteristic_apply,
    sup_norm_scan,
    export_constant_table,
)
from .problems import (
    ManufacturedSolution,
    InitialProfile,
    ProblemSpec,
    MANUFACTURED,
    PROFILES,
    make_problem,
)
from .forward import (
    NewtonConfig,
    NewtonError,
    SlabSolution,
    DgSolution,
    l2_project,
    solve_slab,
    solve_forward,
    save_checkpoint,
    load_checkpoint,
)
from .companions import (
    IdentityReport,
    BackwardSolution,
    solve_backward_dual,
    duality_identity_report,
    duality_identity_residual,
    dual_stability_report,
    solve_backward_psi,
    psi_chain_report,
    laplacian_consistency_residual,
    solve_parabolic_projection,
    local_projection_slab,
    local_projection,
)
from .diagnostics import (
    NormReport,
    EnergyTrace,
    SpectrumTrace,
    RatioReport,
    UnsupportedConfigurationError,
    compute_norms,
    energy_identity,
    energy_trace,
    stability_identity_report,
    spectrum_along_solution,
    best_approximation_ratio,
)
from .config import (
    RunConfig,
    ConfigError,
    load_config,
    parse_config,
    config_hash,
    instantiate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
