"""Rayleigh-Ritz projection and the structured basis-update trick.

The update trick replaces orthogonalization of the full 2n x 4k matrix
[Z, P] by orthogonalization of a small 4k x 2k structured factor built
from the Ritz coefficient matrix, after which

    Z^H C_n Z = C_k,   P^H C_n P = C_k,   P^H C_n Z = 0

hold by construction.  A mirrored variant operates in the Omega inner
product.  Because multiplicative basis updates accumulate rounding error,
a cheap randomized probe decides when [Z, P] needs explicit
reorthogonalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    BSHProblem,
    NeutralBreakdownError,
    PhiBlockMatrix,
    bsh_problem_new,
    c_gram,
    c_matrix,
    omega_gram,
    phi_adjoint,
    phi_col_blocks,
    phi_concat,
    phi_product,
)
from .dense import DENSE_CAP_DEFAULT, dense_bse_solve, structured_gram_eig
from .ortho import (
    NEUTRAL_TOL_DEFAULT,
    c_orthonormalize_cgs,
    omega_orthonormalize,
    svqb_indefinite,
)

__all__ = [
    "RitzOutput",
    "IhlBases",
    "SelectiveCheck",
    "rayleigh_ritz",
    "rayleigh_ritz_omega",
    "ihl_update_c",
    "ihl_update_omega",
    "selective_reorth_needed",
    "reorthonormalize_pair_c",
    "reorthonormalize_pair_omega",
]


@dataclass(frozen=True, eq=False)
class RitzOutput:
    """Ascending positive Ritz values and the structured coefficient block.

    ``metric`` records the inner product of the projection: in the C_n
    metric the coefficients satisfy V^H C V = C; in the Omega metric they
    are unitary, V^H V = I.
    """

    theta_plus: np.ndarray
    v_matrix: PhiBlockMatrix
    metric: str


@dataclass(frozen=True, eq=False)
class IhlBases:
    """New eigenvector block Z, companion block P, and the small factor Q."""

    z: PhiBlockMatrix
    p: PhiBlockMatrix
    q: PhiBlockMatrix


@dataclass(frozen=True)
class SelectiveCheck:
    """Outcome of the randomized orthogonality probe."""

    needed: bool
    measured: float
    threshold: float


def rayleigh_ritz(
    p: BSHProblem, basis: PhiBlockMatrix, loss_warn_tol: float = 1e-8
) -> RitzOutput:
    """Rayleigh-Ritz step in the C_n metric on a C_n-orthonormal basis.

    Projects Omega onto the basis (a structured Hermitian matrix), solves
    the small definite problem against the C metric with the dense
    structured solver, and returns ascending positive Ritz values with the
    structured coefficient matrix.  Raises
    ``NotPositiveDefiniteError`` when the projected matrix fails its
    Cholesky factorization (catastrophic basis degeneration).
    """
    m = basis.block_cols
    loss = float(
        np.max(np.abs(c_gram(basis, basis).assemble() - c_matrix(m)))
    )
    if loss > loss_warn_tol:
        warnings.warn(
            f"basis lost C-orthonormality (max deviation {loss:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    pair = omega_gram(p, basis, basis)
    a_small = 0.5 * (pair.k1 + pair.k1.conj().T)
    b_raw = pair.k2.conj()
    b_small = 0.5 * (b_raw + b_raw.T)
    small = bsh_problem_new(a_small, b_small, validate=False)
    spectrum = dense_bse_solve(small, dense_cap=max(DENSE_CAP_DEFAULT, m))
    return RitzOutput(
        theta_plus=spectrum.lambda_plus, v_matrix=spectrum.eigvecs, metric="c"
    )


def rayleigh_ritz_omega(p: BSHProblem, basis: PhiBlockMatrix) -> RitzOutput:
    """Rayleigh-Ritz step for an Omega-orthonormal basis.

    With U^H Omega U = I the projected pencil reduces to the structured
    C-metric Gram M_C = U^H C_n U, whose positive eigenvalues are the
    reciprocals 1/theta of the Ritz values; the structured eigenvector
    factor is unitary.  Columns are reordered so theta ascends.
    """
    mc = c_gram(basis, basis)
    spectrum = structured_gram_eig(mc)
    sigma = spectrum.lambda_plus
    theta = np.ascontiguousarray((1.0 / sigma)[::-1])
    f = spectrum.eigvecs
    v = PhiBlockMatrix(
        np.ascontiguousarray(f.x_block[:, ::-1]),
        np.ascontiguousarray(f.y_block[:, ::-1]),
    )
    return RitzOutput(theta_plus=theta, v_matrix=v, metric="omega")


def _split_coefficients(ritz: RitzOutput, k: int):
    v = ritz.v_matrix
    m = v.block_cols
    if not 0 < k < m:
        raise ValueError(f"cannot split {m} Ritz columns at k={k}")
    v1 = phi_col_blocks(v, 0, k)
    v2 = phi_col_blocks(v, k, m)
    return v1, v2


def ihl_update_c(
    u: PhiBlockMatrix,
    ritz: RitzOutput,
    k: int,
    neutral_tol: float = NEUTRAL_TOL_DEFAULT,
    rng=None,
) -> IhlBases:
    """Structured basis update in the C_n metric.

    Z takes the k smallest positive Ritz vectors, Z = U V_1.  The
    companion P spans the contribution of the previous iterate: the only
    orthogonalization needed happens on the small structured factor
    Phi(V_{X,12}^H, -V_{Y,12}^T), handled by the indefinite SVQB
    algorithm.  P = U V_2 Q is then C_n-orthonormal and C_n-orthogonal to
    Z for *any* C-orthonormal Q, which also covers the degenerate case
    span{Z_new, Z_old} < 2k: a rank-deficient factor is completed with
    seeded random blocks and still yields a full companion.
    """
    if ritz.metric != "c":
        raise ValueError("ihl_update_c expects C-metric Ritz output")
    v1, v2 = _split_coefficients(ritz, k)
    vx12 = ritz.v_matrix.x_block[:k, k:]
    vy12 = ritz.v_matrix.y_block[:k, k:]
    t_factor = PhiBlockMatrix(vx12.conj().T, -vy12.T)
    try:
        q, _ = svqb_indefinite(
            t_factor, reorth=True, neutral_tol=neutral_tol,
            compute_report=False,
        )
    except NeutralBreakdownError:
        # Degenerate overlap between new and old iterates: complete the
        # factor blockwise, replacing neutral directions.
        q, _ = c_orthonormalize_cgs(
            t_factor, passes=2, neutral_tol=neutral_tol,
            on_breakdown="replace", rng=rng, compute_report=False,
        )
    z = phi_product(u, v1)
    p_dir = phi_product(u, phi_product(v2, q))
    return IhlBases(z=z, p=p_dir, q=q)


def _lowdin_pass(t: PhiBlockMatrix, metric: PhiBlockMatrix, clamp_rtol: float):
    """Orthonormalize T under the structured Hermitian pd metric.

    Computes N = T^H (metric) T through structured products, takes the
    inverse square root (a matrix function preserves the Phi structure of
    a Hermitian structured matrix), and applies it on the right.  Tiny
    metric eigenvalues are clamped relative to the largest so degenerate
    directions do not blow up; they are repaired by the caller's explicit
    reorthogonalization.
    """
    n_phi = phi_product(phi_adjoint(t), phi_product(metric, t))
    kk = n_phi.block_cols
    dense = 0.5 * (n_phi.x_block + n_phi.x_block.conj().T)
    full = np.block(
        [[dense, n_phi.y_block.conj()], [n_phi.y_block, dense.conj()]]
    )
    full = 0.5 * (full + full.conj().T)
    w, vecs = np.linalg.eigh(full)
    w = np.maximum(w, clamp_rtol * max(w[-1], 0.0))
    if w[0] <= 0.0:
        raise NeutralBreakdownError("small-factor metric is not positive")
    d = (vecs * (w ** -0.5)) @ vecs.conj().T
    d1 = 0.5 * (d[:kk, :kk] + d[kk:, kk:].conj())
    d2 = 0.5 * (d[kk:, :kk] + d[:kk, kk:].conj())
    return phi_product(t, PhiBlockMatrix(d1, d2))


def ihl_update_omega(
    p: BSHProblem,
    u: PhiBlockMatrix,
    ritz: RitzOutput,
    k: int,
    clamp_rtol: float = 1e-14,
) -> IhlBases:
    """Mirror of :func:`ihl_update_c` in the Omega inner product.

    The small factor here is Phi(V_{X,12}^H, V_{Y,12}^T) (no signature
    flips), orthonormalized in the metric induced by restricting
    V_2^H (U^H Omega U) V_2 — which reduces to the Euclidean product for
    an exactly Omega-orthonormal basis.  Post-state:
    Z^H Omega Z = I, P^H Omega P = I, P^H Omega Z = 0.
    """
    if ritz.metric != "omega":
        raise ValueError("ihl_update_omega expects Omega-metric Ritz output")
    v1, v2 = _split_coefficients(ritz, k)
    vx12 = ritz.v_matrix.x_block[:k, k:]
    vy12 = ritz.v_matrix.y_block[:k, k:]
    t_factor = PhiBlockMatrix(vx12.conj().T, vy12.T)
    gram = omega_gram(p, u, u)
    gram_phi = PhiBlockMatrix(gram.k1, gram.k2)
    induced = phi_product(phi_adjoint(v2), phi_product(gram_phi, v2))
    q = _lowdin_pass(t_factor, induced, clamp_rtol)
    q = _lowdin_pass(q, induced, clamp_rtol)
    z = phi_product(u, v1)
    p_dir = phi_product(u, phi_product(v2, q))
    return IhlBases(z=z, p=p_dir, q=q)


def selective_reorth_needed(
    bases: IhlBases, rng, tau0: float, res_norm: float
) -> SelectiveCheck:
    """Randomized probe for loss of C_n-orthogonality of [Z, P].

    Draws a real standard Gaussian trial vector g of width 2k and measures
    the two generator-stack defects

        E1 g = S_X^H (S_X g) - S_Y^H (S_Y g) - g,
        E2 g = S_Y^T (S_X g) - S_X^T (S_Y g),

    where S_X = [Z_X, P_X], S_Y = [Z_Y, P_Y].  Reorthogonalization is
    requested iff ||E1 g||_inf + ||E2 g||_inf >= min(tau0, res_norm / 10),
    which skips the expense while the eigenpair accuracy is still low.
    """
    rng = np.random.default_rng(rng)
    sx = np.hstack([bases.z.x_block, bases.p.x_block])
    sy = np.hstack([bases.z.y_block, bases.p.y_block])
    g = rng.standard_normal(sx.shape[1])
    tx = sx @ g
    ty = sy @ g
    e1 = sx.conj().T @ tx - sy.conj().T @ ty - g
    e2 = sy.T @ tx - sx.T @ ty
    measured = float(np.max(np.abs(e1)) + np.max(np.abs(e2)))
    threshold = float(min(tau0, res_norm * 0.1))
    return SelectiveCheck(
        needed=measured >= threshold, measured=measured, threshold=threshold
    )


def reorthonormalize_pair_c(
    z: PhiBlockMatrix,
    p_dir: PhiBlockMatrix,
    neutral_tol: float = NEUTRAL_TOL_DEFAULT,
    on_breakdown: str = "error",
    rng=None,
):
    """Explicit CGS2 refresh of [Z, P] that keeps the Ritz block stable.

    The pair is swept jointly with the Z blocks leading, so near an
    orthonormal state every projection coefficient is tiny and the Ritz
    vectors move only at the scale of the loss being repaired (the
    output-close-to-input property SVQB lacks).  Sweeping Z's own blocks
    matters: mutual loss among them otherwise survives every refresh and
    reintroduces itself through the multiplicative updates, flooring the
    attainable residual.
    """
    combined = phi_concat(z, p_dir)
    out, _ = c_orthonormalize_cgs(
        combined, passes=2, neutral_tol=neutral_tol,
        on_breakdown=on_breakdown, rng=rng, compute_report=False,
    )
    k = z.block_cols
    return phi_col_blocks(out, 0, k), phi_col_blocks(out, k, out.block_cols)


def reorthonormalize_pair_omega(
    p: BSHProblem,
    z: PhiBlockMatrix,
    p_dir: PhiBlockMatrix,
    rng=None,
):
    """Omega-metric refresh of [Z, P], jointly with the Z blocks leading."""
    combined = phi_concat(z, p_dir)
    out, _ = omega_orthonormalize(
        p, combined, on_deficient="replace", rng=rng, compute_report=False
    )
    k = z.block_cols
    return phi_col_blocks(out, 0, k), phi_col_blocks(out, k, out.block_cols)
