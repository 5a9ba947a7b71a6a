"""Structure-preserving orthogonalization in the C_n and Omega inner products.

The C_n metric is indefinite: normalization can break down on (near-)
neutral vectors, and the loss of orthogonality scales with the growth
factor rho_U = ||U||_2^2 / ||U^H C_n U||_2.  Routines here signal
breakdown via :class:`~bseig.core.NeutralBreakdownError`; the remedy is
orthogonalization in the (definite) Omega inner product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BSHProblem,
    NeutralBreakdownError,
    PhiBlockMatrix,
    RankDeficientBasisError,
    UNIT_ROUNDOFF,
    c_gram,
    c_matrix,
    omega_apply,
    omega_gram,
    phi_assemble,
    phi_col_blocks,
    phi_concat,
    phi_product,
)
from .dense import structured_gram_eig

__all__ = [
    "NEUTRAL_TOL_DEFAULT",
    "OrthoReport",
    "orthogonality_loss",
    "c_normalize_block",
    "c_project_against",
    "c_orthonormalize_cgs",
    "svqb_indefinite",
    "omega_orthonormalize",
]

# u^(1/2)-scale boundary between benign and dangerous C-normalization.
NEUTRAL_TOL_DEFAULT = 1e-10

_MAX_REPLACEMENTS = 3


@dataclass(frozen=True, eq=False)
class OrthoReport:
    """Diagnostics of one orthogonalization call.

    ``loss_*`` are ||assembled Gram - metric identity||_2 before/after;
    ``growth_factor`` is rho_U of the input (C metric only, 0 otherwise);
    ``breakdown_blocks`` lists block indices that hit near-neutrality and
    were handled (by replacement or by the caller's fallback).
    """

    loss_before: float
    loss_after: float
    growth_factor: float
    passes: int
    breakdown_blocks: tuple = ()
    fallback_used: bool = False


def orthogonality_loss(
    u: PhiBlockMatrix, metric: str = "c", problem: BSHProblem | None = None
):
    """Measured loss of orthogonality and growth factor of a basis.

    Returns ``(loss, growth_factor)`` where loss is the two-norm distance
    of the assembled Gram from C_p (metric ``"c"``) or I (metric
    ``"omega"``, requires ``problem``).  The growth factor is reported as
    0 for the Omega metric.
    """
    k = u.block_cols
    if metric == "c":
        gram = c_gram(u, u).assemble()
        loss = float(np.linalg.norm(gram - c_matrix(k), 2))
        norm_u_sq = float(np.linalg.norm(phi_assemble(u), 2)) ** 2
        gram_norm = float(np.linalg.norm(gram, 2))
        growth = norm_u_sq / gram_norm if gram_norm > 0 else np.inf
        return loss, growth
    if metric == "omega":
        if problem is None:
            raise ValueError("omega metric requires the problem")
        gram = omega_gram(problem, u, u).assemble()
        loss = float(np.linalg.norm(gram - np.eye(2 * k), 2))
        return loss, 0.0
    raise ValueError(f"unknown metric {metric!r}")


def c_normalize_block(
    u: PhiBlockMatrix, neutral_tol: float = NEUTRAL_TOL_DEFAULT
) -> PhiBlockMatrix:
    """Normalize one structured block (2n x 2) in the C_n metric.

    With gamma = u_X^H u_X - u_Y^H u_Y: a positive gamma scales both
    generators by 1/sqrt(gamma); a negative gamma first swaps the roles,
    (u_X, u_Y) <- (conj(u_Y), conj(u_X)), which exchanges the block's two
    assembled columns so the leading column regains C-norm +1.  The two
    columns of a block are automatically C-orthogonal, so the block
    afterwards satisfies block^H C_n block = C_1 to roundoff.

    Raises ``NeutralBreakdownError`` when |gamma| falls below
    ``neutral_tol * (||u_X||^2 + ||u_Y||^2)``.
    """
    if u.block_cols != 1:
        raise ValueError("c_normalize_block expects a single structured block")
    x, y = u.x_block, u.y_block
    nx = float(np.real(np.vdot(x, x)))
    ny = float(np.real(np.vdot(y, y)))
    gamma = nx - ny
    if abs(gamma) < neutral_tol * (nx + ny) or (nx + ny) == 0.0:
        raise NeutralBreakdownError(
            f"near-neutral block: gamma = {gamma:.3e} against scale {nx + ny:.3e}"
        )
    if gamma < 0:
        x, y = y.conj(), x.conj()
        gamma = -gamma
    scale = 1.0 / np.sqrt(gamma)
    return PhiBlockMatrix(x * scale, y * scale)


def c_project_against(u: PhiBlockMatrix, basis: PhiBlockMatrix) -> PhiBlockMatrix:
    """C_n-orthogonal projection of U against a C_n-orthonormal basis.

    Computes U - basis (C_p (basis^H C_n U)) through structured products;
    C_p times an assembled CGramPair is itself Phi-structured, which keeps
    the whole projector closed in generator form.
    """
    if u.block_rows != basis.block_rows:
        raise ValueError("row dimensions differ")
    g = c_gram(basis, u)
    coeff = PhiBlockMatrix(g.g1, g.g2.conj())  # C_p @ assembled gram
    corr = phi_product(basis, coeff)
    return PhiBlockMatrix(u.x_block - corr.x_block, u.y_block - corr.y_block)


def _replacement_block(rng, n):
    g = rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))
    h = 0.5 * (rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1)))
    return PhiBlockMatrix(g, h)


def _cgs_sweep(u, neutral_tol, on_breakdown, rng, broken):
    """One block-by-block CGS sweep; returns the orthonormalized basis."""
    n, k = u.block_rows, u.block_cols
    done: PhiBlockMatrix | None = None
    for j in range(k):
        block = phi_col_blocks(u, j, j + 1)
        attempts = 0
        while True:
            cand = block if done is None else c_project_against(block, done)
            try:
                cand = c_normalize_block(cand, neutral_tol)
                break
            except NeutralBreakdownError as exc:
                broken.append(j)
                if on_breakdown != "replace":
                    raise NeutralBreakdownError(str(exc), block=j)
                attempts += 1
                if attempts > _MAX_REPLACEMENTS:
                    raise NeutralBreakdownError(
                        f"block {j} stayed neutral after "
                        f"{_MAX_REPLACEMENTS} replacements",
                        block=j,
                    )
                if rng is None:
                    rng = np.random.default_rng(0)
                block = _replacement_block(rng, n)
        done = cand if done is None else phi_concat(done, cand)
    return done


def c_orthonormalize_cgs(
    u: PhiBlockMatrix,
    passes: int = 2,
    neutral_tol: float = NEUTRAL_TOL_DEFAULT,
    on_breakdown: str = "error",
    rng=None,
    compute_report: bool = True,
):
    """Structured classical Gram-Schmidt in the C_n metric (CGS/CGS2).

    Each structured block is projected against all previous blocks and
    block-normalized; with ``passes=2`` the whole sweep runs twice, which
    restores the loss of orthogonality to O(u) ||out||_2^2 under mild
    conditioning assumptions.

    ``on_breakdown="replace"`` substitutes a seeded random block for a
    (near-)neutral one and reprojects — used for basis completion where a
    rank-deficient input must still yield a full orthonormal set.  The
    default propagates ``NeutralBreakdownError`` with the block index.

    Returns ``(basis, OrthoReport)``; ``compute_report=False`` skips the
    loss/growth measurements (hot-path use) and reports NaN instead.
    """
    if passes not in (1, 2):
        raise ValueError("passes must be 1 or 2")
    if 2 * u.block_cols > 2 * u.block_rows:
        raise ValueError("more columns than rows; basis cannot be orthonormal")
    if compute_report:
        loss_before, growth = orthogonality_loss(u, "c")
    else:
        loss_before = growth = float("nan")
    broken: list[int] = []
    out = u
    for _ in range(passes):
        out = _cgs_sweep(out, neutral_tol, on_breakdown, rng, broken)
    loss_after = orthogonality_loss(out, "c")[0] if compute_report else float("nan")
    report = OrthoReport(
        loss_before=loss_before,
        loss_after=loss_after,
        growth_factor=growth,
        passes=passes,
        breakdown_blocks=tuple(dict.fromkeys(broken)),
    )
    return out, report


def _svqb_single_pass(u: PhiBlockMatrix, neutral_tol: float):
    """Diagonal scaling, structured Gram eigendecomposition, basis update."""
    gram = c_gram(u, u)
    gamma = np.real(np.diag(gram.g1))
    # Clamp the scaling at u * trace scale so neutral-ish diagonals do not
    # blow the scaling up; actual neutrality is caught on the eigenvalues.
    floor = UNIT_ROUNDOFF * max(float(np.sum(np.abs(gamma))) / max(len(gamma), 1), 1e-300)
    scale = 1.0 / np.sqrt(np.maximum(np.abs(gamma), floor))
    us = PhiBlockMatrix(u.x_block * scale, u.y_block * scale)
    ms = c_gram(us, us)
    spectrum = structured_gram_eig(ms)
    sig = spectrum.lambda_plus
    if sig[0] < neutral_tol * sig[-1]:
        raise NeutralBreakdownError(
            f"near-singular structured Gram: sigma_min/sigma_max = "
            f"{sig[0] / sig[-1]:.3e}"
        )
    inv_sqrt = sig ** -0.5
    f = spectrum.eigvecs
    factor = PhiBlockMatrix(f.x_block * inv_sqrt, f.y_block * inv_sqrt)
    out = phi_product(us, factor)
    # Guard for the loss bound's validity region Delta * u < 1; the
    # Frobenius norm bounds the two-norm from above (conservative).
    kappa = float(sig[-1] / sig[0])
    out_norm_sq = 2.0 * (
        float(np.linalg.norm(out.x_block)) ** 2
        + float(np.linalg.norm(out.y_block)) ** 2
    )
    if (kappa + 2.0 * out_norm_sq) * UNIT_ROUNDOFF >= 1.0:
        raise NeutralBreakdownError(
            "conditioning too extreme for the SVQB loss bound to apply"
        )
    return out


def svqb_indefinite(
    u: PhiBlockMatrix,
    reorth: bool = True,
    neutral_tol: float = NEUTRAL_TOL_DEFAULT,
    compute_report: bool = True,
):
    """Indefinite SVQB orthogonalization in the C_n metric.

    All work is matrix-matrix products plus one small structured
    eigendecomposition: scale columns so the Gram diagonal has unit
    magnitude, decompose M_U = Phi(F) C_p Phi(Sigma+, 0) Phi(F)^H, and
    update U <- U Phi(F_X Sigma+^{-1/2}, F_Y Sigma+^{-1/2}).  With
    ``reorth`` the pass runs twice (SVQB2), which is required for the
    O(u) ||out||^2 loss bound on ill-conditioned input.

    Returns ``(basis, OrthoReport)``; raises ``NeutralBreakdownError`` on a
    (near-)singular Gram.  ``compute_report=False`` skips the loss/growth
    measurements.
    """
    if compute_report:
        loss_before, growth = orthogonality_loss(u, "c")
    else:
        loss_before = growth = float("nan")
    out = _svqb_single_pass(u, neutral_tol)
    passes = 1
    if reorth:
        out = _svqb_single_pass(out, neutral_tol)
        passes = 2
    loss_after = orthogonality_loss(out, "c")[0] if compute_report else float("nan")
    report = OrthoReport(
        loss_before=loss_before,
        loss_after=loss_after,
        growth_factor=growth,
        passes=passes,
    )
    return out, report


def _omega_block_orthogonalize(p, block, deficiency_rtol=1e-13):
    """Intra-block step: make the two assembled columns Omega-orthogonal.

    The two columns of a structured block share the same Omega-norm beta
    and couple through b = col1^H Omega col2.  The symmetric update
    col1 <- col1 + conj(t) col2, col2 <- col2 + t col1 preserves the
    structure for any t; the root t of conj(b) t^2 + 2 beta t + b = 0 with
    the smaller magnitude makes the updated columns exactly Omega-
    orthogonal.  Returns the updated block and its column Omega-norm.
    """
    x, y = block.x_block, block.y_block
    w = omega_apply(p, block)
    beta = float(np.real(np.vdot(x, w.x_block) + np.vdot(y, w.y_block)))
    b = complex(np.vdot(x, w.y_block.conj()) + np.vdot(y, w.x_block.conj()))
    if beta <= 0:
        raise RankDeficientBasisError("nonpositive Omega-norm (Omega not definite?)")
    disc = beta * beta - abs(b) ** 2
    if disc <= deficiency_rtol * beta * beta:
        raise RankDeficientBasisError(
            "structured block is Omega-rank-deficient"
        )
    if b == 0:
        t = 0.0
    else:
        t = (-beta + np.sqrt(disc)) / np.conj(b)
    xn = x + np.conj(t) * y.conj()
    yn = y + np.conj(t) * x.conj()
    norm_sq = beta + 2.0 * float(np.real(t * np.conj(b))) + abs(t) ** 2 * beta
    if norm_sq <= 0:
        raise RankDeficientBasisError("block collapsed during intra-block step")
    s = 1.0 / np.sqrt(norm_sq)
    return PhiBlockMatrix(xn * s, yn * s)


def _omega_project(p, u, basis):
    """Project U against an Omega-orthonormal structured basis."""
    g = omega_gram(p, basis, u)
    corr = phi_product(basis, PhiBlockMatrix(g.k1, g.k2))
    return PhiBlockMatrix(u.x_block - corr.x_block, u.y_block - corr.y_block)


def omega_orthonormalize(
    p: BSHProblem,
    u: PhiBlockMatrix,
    against: PhiBlockMatrix | None = None,
    on_deficient: str = "error",
    rng=None,
    compute_report: bool = True,
):
    """Structured Gram-Schmidt in the Omega inner product (the remedy path).

    Blocks are projected (twice, CGS2 style) against ``against`` and all
    previously finished blocks, then Omega-orthogonalized *within* the
    block — unlike the C_n metric, the two columns of a block are not
    automatically Omega-orthogonal — and normalized.  For definite Omega
    this never meets neutral vectors, so it is total on full-rank input.

    ``on_deficient="replace"`` substitutes seeded random blocks for rank-
    deficient ones (basis completion); the default raises
    ``RankDeficientBasisError``.

    Returns ``(basis, OrthoReport)``.
    """
    loss_before = orthogonality_loss(u, "omega", p)[0] if compute_report else float("nan")
    n, k = u.block_rows, u.block_cols
    broken: list[int] = []
    done: PhiBlockMatrix | None = None
    for j in range(k):
        block = phi_col_blocks(u, j, j + 1)
        attempts = 0
        while True:
            cand = block
            for _ in range(2):
                if against is not None:
                    cand = _omega_project(p, cand, against)
                if done is not None:
                    cand = _omega_project(p, cand, done)
            try:
                cand = _omega_block_orthogonalize(p, cand)
                break
            except RankDeficientBasisError:
                broken.append(j)
                if on_deficient != "replace":
                    raise
                attempts += 1
                if attempts > _MAX_REPLACEMENTS:
                    raise
                if rng is None:
                    rng = np.random.default_rng(0)
                block = _replacement_block(rng, n)
        done = cand if done is None else phi_concat(done, cand)
    loss_after = orthogonality_loss(done, "omega", p)[0] if compute_report else float("nan")
    report = OrthoReport(
        loss_before=loss_before,
        loss_after=loss_after,
        growth_factor=0.0,
        passes=1,
        breakdown_blocks=tuple(dict.fromkeys(broken)),
        fallback_used=True,
    )
    return done, report
