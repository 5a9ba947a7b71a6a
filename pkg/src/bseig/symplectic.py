"""Symplectic eigenvalue front-end via the BSH equivalence.

A real symmetric positive definite 2n x 2n matrix M is unitarily
congruent to a definite BSH problem; the l smallest symplectic
eigenvalues of M coincide with the l smallest positive eigenvalues of the
BSH matrix, and the real symplectic eigenvector block is recovered from
the structured eigenvectors by a fixed unitary congruence with a closed
real form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import BSHProblem, PhiBlockMatrix, bsh_problem_new, omega_gram
from .ihl import rayleigh_ritz
from .solver import (
    MODE_ADAPTIVE,
    Preconditioner,
    SolverConfig,
    Solution,
    adaptive_solve,
    lobpcg_solve,
)

__all__ = [
    "SymplecticResult",
    "spd_to_bsh",
    "phi_to_symplectic",
    "normalize_symplectic_columns",
    "symplectic_eigensolve",
    "trace_min_check",
]


@dataclass(frozen=True, eq=False)
class SymplecticResult:
    """Symplectic eigenvalues, eigenvector block, and residual diagnostics.

    ``s_block`` is real 2n x 2l in the block column order
    [s_1 .. s_l, partners], so S^T M S = diag(Lambda, Lambda).
    ``solution`` carries the underlying solver output (history, converged
    flag); on non-convergence partial results are returned rather than
    raising.
    """

    eigenvalues: np.ndarray
    s_block: np.ndarray
    j_residual: float
    diag_residual: float
    trace_residual: float
    solution: Solution


def spd_to_bsh(m: np.ndarray) -> BSHProblem:
    """Map a real symmetric matrix M to the equivalent BSH problem.

    With M partitioned into n x n blocks M11, M12, M21, M22:

        A = (M11 + M22)/2 + i (M12 - M21)/2,
        B = (M11 - M22)/2 - i (M12 + M21)/2.

    A is Hermitian and B symmetric by construction; positive definiteness
    of M (asserted by the caller) is equivalent to definiteness of the
    resulting problem.  Sub-tolerance asymmetry of the input is projected
    out; anything larger raises.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("M must be square")
    if m.shape[0] % 2:
        raise ValueError("M must have even dimension 2n")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > 1e-12 * scale:
        raise ValueError(f"M is not symmetric: max |M - M^T| = {asym:.3e}")
    m = 0.5 * (m + m.T)
    n = m.shape[0] // 2
    m11, m12 = m[:n, :n], m[:n, n:]
    m21, m22 = m[n:, :n], m[n:, n:]
    a = 0.5 * (m11 + m22) + 0.5j * (m12 - m21)
    b = 0.5 * (m11 - m22) - 0.5j * (m12 + m21)
    return bsh_problem_new(a, b, validate=True)


def phi_to_symplectic(z: PhiBlockMatrix) -> np.ndarray:
    """Closed real form of the unitary congruence S = Q_n^H Phi(X, Y) Q_l.

    Evaluated blockwise from the generators in O(n l) extra work:

        S = [[Re(X + Y), Im(X + Y)], [-Im(X - Y), Re(X - Y)]].

    For exactly structured input the congruence has no imaginary part at
    all, so this evaluation is exact in form.
    """
    x, y = z.x_block, z.y_block
    s_plus = x + y
    s_minus = x - y
    return np.block(
        [[s_plus.real, s_plus.imag], [-s_minus.imag, s_minus.real]]
    )


def normalize_symplectic_columns(s: np.ndarray) -> np.ndarray:
    """Fix the scale/sign freedom of symplectic eigenvector pairs.

    Pairs (s_i, s_{i+l}) are rescaled so the symplectic pairing
    s_i^T J s_{i+l} equals one, and the pair sign is flipped so the
    largest-magnitude entry of s_i is positive.  Near-zero pairings are
    left alone (they indicate solver failure and show up in the residual
    diagnostics instead).
    """
    s = np.array(s, dtype=float)
    two_n, two_l = s.shape
    n, l = two_n // 2, two_l // 2
    for i in range(l):
        si, sj = s[:, i], s[:, i + l]
        pairing = float(si[:n] @ sj[n:] - si[n:] @ sj[:n])
        if pairing < 0:
            s[:, i + l] *= -1.0
            pairing = -pairing
        if pairing > 0.1:
            scale = 1.0 / np.sqrt(pairing)
            s[:, i] *= scale
            s[:, i + l] *= scale
        idx = int(np.argmax(np.abs(s[:, i])))
        if s[idx, i] < 0:
            s[:, i] *= -1.0
            s[:, i + l] *= -1.0
    return s


def symplectic_eigensolve(
    m: np.ndarray,
    l: int,
    cfg: SolverConfig | None = None,
    precond: Preconditioner | None = None,
) -> SymplecticResult:
    """Compute the l smallest symplectic eigenvalues of a real spd matrix.

    Transforms M to the equivalent BSH problem, runs the solver (the
    adaptive driver by default, or the fixed variant named by cfg.mode),
    maps the structured eigenvectors back to the real symplectic block,
    and fills the residual diagnostics (J-orthogonality, diagonalization,
    and trace-identity residuals).
    """
    from .problems import build_preconditioner

    problem = spd_to_bsh(m)
    m = 0.5 * (np.asarray(m, dtype=float) + np.asarray(m, dtype=float).T)
    if cfg is None:
        cfg = SolverConfig(l=l)
    elif cfg.l != l:
        cfg = replace(cfg, l=l, k=None)
    if precond is None:
        precond = build_preconditioner(problem, "diag_a")
    if cfg.mode == MODE_ADAPTIVE:
        sol = adaptive_solve(problem, precond, cfg)
    else:
        sol = lobpcg_solve(problem, precond, cfg)
    s = normalize_symplectic_columns(phi_to_symplectic(sol.eigvecs))
    lam = sol.eigenvalues
    n = problem.n
    js = np.vstack([s[n:], -s[:n]])
    j_small = np.zeros((2 * l, 2 * l))
    j_small[:l, l:] = np.eye(l)
    j_small[l:, :l] = -np.eye(l)
    j_res = float(np.max(np.abs(s.T @ js - j_small)))
    sms = s.T @ (m @ s)
    diag_res = float(np.max(np.abs(sms - np.diag(np.concatenate([lam, lam])))))
    trace_res = float(abs(np.trace(sms) - 2.0 * np.sum(lam)))
    return SymplecticResult(
        eigenvalues=lam,
        s_block=s,
        j_residual=j_res,
        diag_residual=diag_res,
        trace_residual=trace_res,
        solution=sol,
    )


def trace_min_check(p: BSHProblem, z: PhiBlockMatrix) -> float:
    """Trace-identity residual |trace(Z^H Omega Z) - 2 sum(theta)|.

    theta are the Ritz values of the C-orthonormal block Z; the residual
    vanishes exactly at minimizers (the trace of the projected matrix
    equals twice the sum of the smallest positive eigenvalues there) and
    is used as a convergence diagnostic.
    """
    ritz = rayleigh_ritz(p, z)
    k1 = omega_gram(p, z, z).k1
    trace = 2.0 * float(np.real(np.trace(k1)))
    return float(abs(trace - 2.0 * float(np.sum(ritz.theta_plus))))
