"""Problem generation, file ingestion, and preconditioner construction.

Generators produce deterministic test problems from a seed: random
definite BSH problems certified positive definite by diagonal dominance,
and real spd matrices with a *known* symplectic spectrum — built as
M = Q diag(D, D) Q^T with symplectic Q, so the symplectic eigenvalues
equal diag(D) regardless of the exact factors by congruence invariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BSHProblem, UNIT_ROUNDOFF, bsh_problem_new, j_matrix
from .mmio import MatrixMarketError, read_matrix_market
from .solver import Preconditioner

__all__ = [
    "GeneratedProblem",
    "gen_random_definite_bsh",
    "gen_known_spectrum_spd",
    "load_matrix_market",
    "build_preconditioner",
    "random_unitary",
    "orthosymplectic_from_unitary",
    "symplectic_gauss_transform",
]


@dataclass(frozen=True, eq=False)
class GeneratedProblem:
    """A test problem with provenance and, when known, its ground truth.

    ``problem`` is a :class:`BSHProblem` or a real spd ndarray;
    ``ground_truth`` (ascending, positive) is present only for generators
    whose spectrum is known by construction.
    """

    problem: object
    ground_truth: np.ndarray | None
    provenance: str


def gen_random_definite_bsh(
    n: int, seed: int = 0, diag_shift: float = 1.0
) -> GeneratedProblem:
    """Random definite BSH problem of size n.

    A = H_r + (||H_r||_inf + ||B_r||_inf + diag_shift) I for random
    Hermitian H_r and random complex-symmetric B = B_r; with max-abs-row-
    sum norms the shift makes the assembled Omega strictly diagonally
    dominant with margin ``diag_shift``, hence positive definite by
    Gershgorin.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if diag_shift <= 0:
        raise ValueError("diag_shift must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    hr = 0.5 * (g + g.conj().T)
    g2 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    br = 0.5 * (g2 + g2.T)
    shift = (
        np.linalg.norm(hr, np.inf) + np.linalg.norm(br, np.inf) + diag_shift
    )
    a = hr + shift * np.eye(n)
    problem = bsh_problem_new(a, br, validate=True)
    return GeneratedProblem(
        problem=problem,
        ground_truth=None,
        provenance=f"random:{n}:{seed}:shift={diag_shift!r}",
    )


def random_unitary(n: int, rng) -> np.ndarray:
    """Seeded random unitary: complex Gaussian, two Gram-Schmidt passes."""
    u = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    for _ in range(2):
        for j in range(n):
            col = u[:, j]
            if j:
                col = col - u[:, :j] @ (u[:, :j].conj().T @ col)
            u[:, j] = col / np.linalg.norm(col)
    return u


def orthosymplectic_from_unitary(u: np.ndarray) -> np.ndarray:
    """Realification [[Re U, Im U], [-Im U, Re U]], orthogonal and symplectic."""
    return np.block([[u.real, u.imag], [-u.imag, u.real]])


def symplectic_gauss_transform(n: int, j: int, nu: float, c: float) -> np.ndarray:
    """Symplectic shear acting as [[nu, c], [0, 1/nu]] on index pair (j, j+n).

    Extended symplectically by the identity elsewhere; any unit-
    determinant 2x2 action on a symplectic coordinate pair is symplectic.
    """
    if not 0 <= j < n:
        raise ValueError(f"pair index {j} out of range for n={n}")
    if nu == 0:
        raise ValueError("shear parameter nu must be nonzero")
    l = np.eye(2 * n)
    l[j, j] = nu
    l[j, j + n] = c
    l[j + n, j + n] = 1.0 / nu
    return l


def gen_known_spectrum_spd(n: int, seed: int = 0) -> GeneratedProblem:
    """Dense real spd matrix with symplectic eigenvalues exactly 1..n.

    M = Q diag(D, D) Q^T with D = diag(1..n) and Q = K L, where K is the
    orthosymplectic realification of a seeded random unitary and L is a
    symplectic shear with parameters (n/5, 1.2, -sqrt(n/5)).  Any
    symplectic Q leaves the symplectic spectrum at diag(D).
    """
    if n < 5:
        raise ValueError("n must be >= 5")
    rng = np.random.default_rng(seed)
    k_factor = orthosymplectic_from_unitary(random_unitary(n, rng))
    pair = max(1, round(n / 5)) - 1
    l_factor = symplectic_gauss_transform(n, pair, 1.2, -np.sqrt(n / 5.0))
    for factor, name in ((k_factor, "K"), (l_factor, "L")):
        j = j_matrix(n)
        res = np.max(np.abs(factor.T @ j @ factor - j))
        if res > 1e-12:
            raise RuntimeError(f"factor {name} failed symplecticity: {res:.3e}")
    q = k_factor @ l_factor
    d = np.concatenate([np.arange(1.0, n + 1.0)] * 2)
    m = (q * d) @ q.T
    m = 0.5 * (m + m.T)
    return GeneratedProblem(
        problem=m,
        ground_truth=np.arange(1.0, n + 1.0),
        provenance=f"known:{n}:{seed}",
    )


def load_matrix_market(path_a, path_b=None, kind: str = "spd") -> GeneratedProblem:
    """Load a problem from Matrix Market files.

    kind ``"spd"``: one real file; must be square, even-dimensional, and
    symmetric (expanded from symmetric storage or verified numerically).
    kind ``"bsh"``: two files, A (Hermitian) and B (complex symmetric) of
    equal size; validation is delegated to :func:`bsh_problem_new`.
    """
    if kind not in ("spd", "bsh"):
        raise ValueError(f"kind must be 'spd' or 'bsh', got {kind!r}")
    mat_a, info_a = read_matrix_market(path_a)
    if kind == "spd":
        if path_b is not None:
            raise ValueError("spd kind takes a single file")
        if info_a.field == "complex":
            raise MatrixMarketError("spd matrix must be real-valued")
        if mat_a.shape[0] != mat_a.shape[1]:
            raise MatrixMarketError("spd matrix must be square")
        if mat_a.shape[0] % 2:
            raise MatrixMarketError(
                f"spd matrix must have even dimension, got {mat_a.shape[0]}"
            )
        m = mat_a.real.astype(float)
        scale = max(1.0, float(np.max(np.abs(m))))
        if info_a.symmetry == "general" and np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise MatrixMarketError(
                "matrix marked general is not numerically symmetric"
            )
        return GeneratedProblem(
            problem=m, ground_truth=None, provenance=f"file:{path_a}"
        )
    if path_b is None:
        raise ValueError("bsh kind needs both A and B files")
    mat_b, _ = read_matrix_market(path_b)
    problem = bsh_problem_new(mat_a, mat_b, validate=True)
    return GeneratedProblem(
        problem=problem,
        ground_truth=None,
        provenance=f"file:{path_a},{path_b}",
    )


def build_preconditioner(p: BSHProblem, kind: str = "diag_a") -> Preconditioner:
    """Build a structured preconditioner from the problem diagonals.

    ``diag_a`` inverts Phi(Diag(A), 0); ``block_diag_ab`` solves the
    per-index 2x2 blocks of Phi(Diag(A), Diag(conj B)).  Factors are
    stored for O(n k) application.
    """
    if kind == "identity":
        return Preconditioner(kind="identity")
    a = np.asarray(p.a_block)
    d = np.diag(a).copy()
    floor = UNIT_ROUNDOFF * max(1.0, float(np.max(np.abs(a))))
    bad = np.nonzero(np.abs(d) < floor)[0]
    if bad.size:
        raise ValueError(f"singular diagonal of A at index {bad[0]}")
    if kind == "diag_a":
        return Preconditioner(kind="diag_a", diag_a=d)
    if kind == "block_diag_ab":
        b = np.diag(np.asarray(p.b_block)).copy()
        det = np.real(d) ** 2 - np.abs(b) ** 2
        bad = np.nonzero(np.abs(det) < floor**2)[0]
        if bad.size:
            raise ValueError(
                f"singular 2x2 preconditioner block at index {bad[0]}"
            )
        return Preconditioner(
            kind="block_diag_ab", diag_a=np.real(d), diag_b=b, block_det=det
        )
    raise ValueError(f"unknown preconditioner kind {kind!r}")
