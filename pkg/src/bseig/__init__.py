"""Structure-preserving eigensolvers for definite Bethe-Salpeter
Hamiltonians and for the symplectic eigenvalue problem.

The library computes the l smallest positive eigenpairs of a definite BSH
matrix with indefinite-metric LOBPCG iterations that keep every iterate in
the two-generator block form, and maps real symmetric positive definite
matrices through the unitary BSH equivalence to obtain their smallest
symplectic eigenvalues and eigenvectors.
"""

from .core import (
    UNIT_ROUNDOFF,
    BSHProblem,
    CGramPair,
    NeutralBreakdownError,
    NotPositiveDefiniteError,
    PhiBlockMatrix,
    PhiGramPair,
    RankDeficientBasisError,
    bsh_problem_new,
    c_gram,
    c_matrix,
    estimate_omega_norm,
    j_matrix,
    omega_apply,
    omega_assemble,
    omega_gram,
    phi_assemble,
    phi_concat,
    phi_product,
)
from .dense import (
    StructuredSpectrum,
    WilliamsonResult,
    dense_bse_solve,
    structured_gram_eig,
    williamson_dense,
)
from .ihl import (
    IhlBases,
    RitzOutput,
    ihl_update_c,
    ihl_update_omega,
    rayleigh_ritz,
    rayleigh_ritz_omega,
    selective_reorth_needed,
)
from .ortho import (
    OrthoReport,
    c_normalize_block,
    c_orthonormalize_cgs,
    c_project_against,
    omega_orthonormalize,
    orthogonality_loss,
    svqb_indefinite,
)
from .problems import (
    GeneratedProblem,
    build_preconditioner,
    gen_known_spectrum_spd,
    gen_random_definite_bsh,
    load_matrix_market,
)
from .solver import (
    ConvergenceHistory,
    Preconditioner,
    Solution,
    SolverConfig,
    adaptive_solve,
    apply_preconditioner,
    compute_residuals,
    default_block_size,
    lobpcg_solve,
    slope,
    switch_decision,
)
from .symplectic import (
    SymplecticResult,
    spd_to_bsh,
    symplectic_eigensolve,
    trace_min_check,
)

__version__ = "0.1.0"
