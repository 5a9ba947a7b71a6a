"""Dense structured spectral solvers.

These serve three roles: the Rayleigh-Ritz subproblem solver inside the
iterative drivers, the desk-scale oracle for tests, and a dense Williamson
solver for real symmetric positive definite matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .core import (
    BSHProblem,
    NeutralBreakdownError,
    NotPositiveDefiniteError,
    PhiBlockMatrix,
    CGramPair,
    c_matrix,
    j_matrix,
    omega_assemble,
    phi_assemble,
)

__all__ = [
    "DENSE_CAP_DEFAULT",
    "StructuredSpectrum",
    "WilliamsonResult",
    "dense_bse_solve",
    "structured_gram_eig",
    "williamson_dense",
]

# O(n^3) oracle work stays in the seconds range below this problem size.
DENSE_CAP_DEFAULT = 512

# Eigenvalues closer than this (relative to the largest) are treated as a
# degenerate cluster and jointly re-orthonormalized.
_CLUSTER_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class StructuredSpectrum:
    """Positive half-spectrum and structured eigenvector block.

    ``lambda_plus`` is ascending and positive; ``eigvecs`` = Phi(X, Y)
    collects the corresponding eigenvector generators, with the negative
    partners implied by the structure.
    """

    lambda_plus: np.ndarray
    eigvecs: PhiBlockMatrix


@dataclass(frozen=True, eq=False)
class WilliamsonResult:
    """Symplectic eigenvalues (ascending) and the real symplectic factor S."""

    eigenvalues: np.ndarray
    s_matrix: np.ndarray


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _cluster_slices(values: np.ndarray, rtol: float):
    """Contiguous index slices of near-equal entries in an ascending vector."""
    if values.size == 0:
        return
    scale = max(abs(values[-1]), abs(values[0]))
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or values[i] - values[i - 1] > rtol * scale:
            yield slice(start, i)
            start = i


def _c_reorthonormalize_clusters(x, y, lam, rtol=_CLUSTER_RTOL):
    """Loewdin-orthonormalize eigenvector columns within degenerate clusters.

    Column mixing within a positive-eigenvalue cluster keeps the structure;
    the C-metric cluster Gram is ~ I, so its inverse square root is safe.
    """
    for sl in _cluster_slices(lam, rtol):
        if sl.stop - sl.start < 2:
            continue
        xc, yc = x[:, sl], y[:, sl]
        gram = _hermitize(xc.conj().T @ xc - yc.conj().T @ yc)
        w, v = np.linalg.eigh(gram)
        if w.min() <= 0:
            # Cluster Gram should be ~ I; a nonpositive value means the
            # cluster mixed with negative partners beyond repair.
            raise NotPositiveDefiniteError(
                "degenerate cluster lost C-metric definiteness"
            )
        inv_sqrt = (v * (w ** -0.5)) @ v.conj().T
        x[:, sl] = xc @ inv_sqrt
        y[:, sl] = yc @ inv_sqrt
    return x, y


def dense_bse_solve(
    p: BSHProblem,
    dense_cap: int = DENSE_CAP_DEFAULT,
    check_rtol: float = 1e-10,
) -> StructuredSpectrum:
    """Full structured spectral decomposition of a definite BSH matrix.

    Reduction route: factor Omega = L L^H, diagonalize the Hermitian
    indefinite W = L^H C_n L (its spectrum equals that of C_n Omega), and
    map each positive eigenpair (mu, v) to the eigenvector z = C_n L v,
    whose C_n-norm is exactly mu ||v||^2 and is rescaled to +1.  Negative
    partners are implied by the stored structure, which makes the
    decomposition of the assembled matrix exact in form.

    Raises ``NotPositiveDefiniteError`` when the Cholesky factorization
    fails, and ``RuntimeError`` when the residual check fails.
    """
    n = p.n
    if n > dense_cap:
        raise ValueError(f"problem size {n} exceeds dense cap {dense_cap}")
    omega = omega_assemble(p)
    try:
        ell = sla.cholesky(omega, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Omega is not positive definite: {exc}")
    cl = ell.copy()
    cl[n:, :] *= -1.0
    w = _hermitize(ell.conj().T @ cl)
    mu, vecs = np.linalg.eigh(w)
    # Sylvester: W is congruent to C_n, so exactly n eigenvalues of each sign.
    pos = mu[n:]
    vpos = vecs[:, n:]
    if pos[0] <= 0:
        raise NotPositiveDefiniteError(
            "positive half-spectrum is not positive; Omega too close to singular"
        )
    z = (cl @ vpos) / np.sqrt(pos)
    x = np.ascontiguousarray(z[:n])
    y = np.ascontiguousarray(z[n:])
    x, y = _c_reorthonormalize_clusters(x, y, pos)
    eigvecs = PhiBlockMatrix(x, y)

    omega_norm = float(np.linalg.norm(w, 2))
    rx = p.a_block @ x + p.b_block @ y - x * pos
    ry = p.b_block.conj() @ x + p.a_block.conj() @ y + y * pos
    res = max(np.max(np.abs(rx)), np.max(np.abs(ry)))
    if res > check_rtol * max(omega_norm, 1.0):
        raise RuntimeError(
            f"structured eigendecomposition residual {res:.3e} exceeds "
            f"{check_rtol:.1e} * ||Omega||"
        )
    return StructuredSpectrum(lambda_plus=pos, eigvecs=eigvecs)


def _purify_partner_overlap(x, y):
    """One symmetric correction step removing overlap with partner columns.

    The partner embedding g_j = [conj(f2_j); conj(f1_j)] of a computed
    positive eigenvector f_j is an exact eigenvector of the structured
    matrix; roundoff leaves O(u / sigma_rel) cross terms g_i^H f_j.  The
    overlap matrix is symmetric, so a half-step correction cancels it to
    second order.
    """
    f = np.vstack([x, y])
    g = np.vstack([y.conj(), x.conj()])
    overlap = g.conj().T @ f
    f = f - 0.5 * (g @ overlap)
    # Restore orthonormality of the corrected positive block.
    q, _ = np.linalg.qr(f)
    p = x.shape[0]
    return q[:p], q[p:]


def structured_gram_eig(m: CGramPair, singular_rtol: float = 1e-13) -> StructuredSpectrum:
    """Structured spectral decomposition of an assembled C-metric Gram.

    The assembled M = [[G1, G2], [-conj(G2), -conj(G1)]] is Hermitian with
    eigenvalues in +/- pairs and structured eigenvectors F = Phi(F_X, F_Y)
    with F^H F = I.  Positive eigenpairs come from a dense Hermitian
    eigendecomposition; the negative partners are implied by the structure
    via the swap-conjugate map.

    Raises ``NeutralBreakdownError`` when the smallest eigenvalue magnitude
    falls below ``singular_rtol`` times the largest (singular Gram).
    """
    g1 = _hermitize(m.g1)
    g2 = 0.5 * (m.g2 - m.g2.T)  # enforce exact skew-symmetry
    p = g1.shape[0]
    full = np.block([[g1, g2], [-g2.conj(), -g1.conj()]])
    sig, vecs = np.linalg.eigh(full)
    smax = max(abs(sig[0]), abs(sig[-1]))
    if smax == 0.0 or min(abs(sig)) < singular_rtol * smax:
        raise NeutralBreakdownError(
            "structured Gram matrix is numerically singular"
        )
    pos = sig[p:]
    if pos[0] <= 0:
        raise NeutralBreakdownError(
            "structured Gram eigenvalues failed to split into +/- pairs"
        )
    fx = np.ascontiguousarray(vecs[:p, p:])
    fy = np.ascontiguousarray(vecs[p:, p:])
    # QR within degenerate positive clusters keeps F^H F = I deterministic.
    for sl in _cluster_slices(pos, _CLUSTER_RTOL):
        if sl.stop - sl.start < 2:
            continue
        q, _ = np.linalg.qr(np.vstack([fx[:, sl], fy[:, sl]]))
        fx[:, sl] = q[:p]
        fy[:, sl] = q[p:]
    fx, fy = _purify_partner_overlap(fx, fy)
    return StructuredSpectrum(lambda_plus=pos, eigvecs=PhiBlockMatrix(fx, fy))


def _q_unitary(n: int) -> np.ndarray:
    """The fixed unitary relating the BSH and real symmetric forms."""
    eye = np.eye(n)
    return np.block([[eye, -1j * eye], [eye, 1j * eye]]) / np.sqrt(2.0)


def williamson_dense(
    m: np.ndarray,
    dense_cap: int = DENSE_CAP_DEFAULT,
    imag_rtol: float = 1e-9,
) -> WilliamsonResult:
    """Williamson normal form of a real spd matrix via the BSH equivalence.

    Builds the equivalent BSH problem, runs :func:`dense_bse_solve`, and
    maps the eigenvector block back through the unitary congruence
    S = Re(Q_n^H Z Q_n).  The imaginary residue of that product measures
    only floating-point error because the structured Z maps to a real S
    identically; it is still checked against ``imag_rtol``.
    """
    from .symplectic import spd_to_bsh, normalize_symplectic_columns

    m = np.asarray(m, dtype=float)
    if m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise ValueError("M must be square with even dimension")
    n = m.shape[0] // 2
    if n > dense_cap:
        raise ValueError(f"problem size {n} exceeds dense cap {dense_cap}")
    problem = spd_to_bsh(m)
    spectrum = dense_bse_solve(problem, dense_cap=dense_cap)
    q = _q_unitary(n)
    s_complex = q.conj().T @ phi_assemble(spectrum.eigvecs) @ q
    s = s_complex.real.copy()
    imag = np.max(np.abs(s_complex.imag))
    if imag > imag_rtol * max(1.0, np.max(np.abs(s))):
        raise RuntimeError(
            f"imaginary residue {imag:.3e} of the symplectic factor is too large"
        )
    s = normalize_symplectic_columns(s)
    return WilliamsonResult(eigenvalues=spectrum.lambda_plus.copy(), s_matrix=s)
