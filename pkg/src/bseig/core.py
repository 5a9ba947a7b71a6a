"""Structured kernels for definite Bethe-Salpeter Hamiltonian (BSH) matrices.

A BSH matrix splits as H = C_n * Omega with

    C_n = diag(I_n, -I_n),        Omega = [[A, B], [conj(B), conj(A)]],

where A is Hermitian and B is complex symmetric.  Eigenvector blocks and all
intermediate bases of the solvers carry the two-generator block form

    Phi(X, Y) = [[X, conj(Y)], [Y, conj(X)]],

which is closed under products and conjugate transposition.  Only the
generators (X, Y) are ever stored; dense assembly exists for tests and
oracles.  All arithmetic is complex double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "UNIT_ROUNDOFF",
    "SYMMETRY_RTOL",
    "NeutralBreakdownError",
    "NotPositiveDefiniteError",
    "RankDeficientBasisError",
    "PhiBlockMatrix",
    "BSHProblem",
    "CGramPair",
    "PhiGramPair",
    "bsh_problem_new",
    "phi_assemble",
    "phi_adjoint",
    "phi_concat",
    "phi_col_blocks",
    "phi_product",
    "omega_apply",
    "omega_apply_dense",
    "omega_assemble",
    "c_gram",
    "omega_gram",
    "c_matrix",
    "j_matrix",
    "estimate_omega_norm",
]

# Unit roundoff of IEEE double precision; tolerances throughout are stated
# as multiples of this constant.
UNIT_ROUNDOFF = 2.0 ** -52

# Relative tolerance for Hermitian/symmetric input validation.  File-format
# round trips perturb at unit-roundoff scale, hence the small multiplier.
SYMMETRY_RTOL = 1e-12


class NeutralBreakdownError(RuntimeError):
    """A (near-)neutral vector was met while normalizing in the C_n metric.

    Carries the offending structured block index when known.  Callers are
    expected to retry the orthogonalization in the Omega inner product.
    """

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class NotPositiveDefiniteError(RuntimeError):
    """A matrix required to be positive definite failed its factorization."""


class RankDeficientBasisError(RuntimeError):
    """A basis column had numerically zero norm in the requested metric."""


def _as_complex(m, name):
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True, eq=False)
class PhiBlockMatrix:
    """The 2n x 2k structured matrix Phi(X, Y), stored by its generators.

    ``x_block`` and ``y_block`` are dense complex n x k arrays.  The
    assembled matrix is [[X, conj(Y)], [Y, conj(X)]]; see
    :func:`phi_assemble`.
    """

    x_block: np.ndarray
    y_block: np.ndarray

    def __post_init__(self):
        x = _as_complex(self.x_block, "x_block")
        y = _as_complex(self.y_block, "y_block")
        if x.shape != y.shape:
            raise ValueError(
                f"generator blocks must have identical shapes, "
                f"got {x.shape} and {y.shape}"
            )
        object.__setattr__(self, "x_block", x)
        object.__setattr__(self, "y_block", y)

    @property
    def block_rows(self) -> int:
        """n: row count of each generator (assembled rows are 2n)."""
        return self.x_block.shape[0]

    @property
    def block_cols(self) -> int:
        """k: column count of each generator (assembled columns are 2k)."""
        return self.x_block.shape[1]

    @property
    def shape(self):
        n, k = self.x_block.shape
        return (2 * n, 2 * k)


@dataclass(frozen=True, eq=False)
class BSHProblem:
    """Definite BSH problem data: Hermitian A and complex-symmetric B.

    ``a_block`` and ``b_block`` may be dense arrays or any objects
    supporting ``@`` products and ``.conj()`` (e.g. sparse matrices); input
    validation and dense oracles require ndarrays.  Positive definiteness
    of Omega is asserted by the caller and only verified by the dense
    solver at desk scale.

    The two-norm sketch cache is keyed by (sketch width, seed); fills are
    idempotent (the estimate is deterministic given the seed), so
    concurrent fills of the same key race benignly.
    """

    a_block: object
    b_block: object
    _norm_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.a_block.shape[0]


def bsh_problem_new(a_block, b_block, validate: bool = True) -> BSHProblem:
    """Build a BSH problem from A (Hermitian) and B (complex symmetric).

    With ``validate`` set, symmetry residuals are checked against
    ``SYMMETRY_RTOL * max(1, max-abs-entry)``.  Violations raise; no silent
    symmetrization is performed.
    """
    a = _as_complex(a_block, "a_block")
    b = _as_complex(b_block, "b_block")
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise ValueError("A and B must be square")
    if a.shape != b.shape:
        raise ValueError(f"A and B dimensions differ: {a.shape} vs {b.shape}")
    if validate:
        tol_a = SYMMETRY_RTOL * max(1.0, np.max(np.abs(a)) if a.size else 0.0)
        herm_res = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
        if herm_res > tol_a:
            raise ValueError(
                f"A is not Hermitian: max |A - A^H| = {herm_res:.3e} > {tol_a:.3e}"
            )
        tol_b = SYMMETRY_RTOL * max(1.0, np.max(np.abs(b)) if b.size else 0.0)
        sym_res = np.max(np.abs(b - b.T)) if b.size else 0.0
        if sym_res > tol_b:
            raise ValueError(
                f"B is not complex symmetric: max |B - B^T| = {sym_res:.3e} > {tol_b:.3e}"
            )
    return BSHProblem(a_block=a, b_block=b)


def c_matrix(k: int) -> np.ndarray:
    """Dense signature matrix C_k = diag(I_k, -I_k) (test/oracle support)."""
    c = np.eye(2 * k)
    c[k:, k:] *= -1.0
    return c


def j_matrix(k: int) -> np.ndarray:
    """Dense symplectic form J_k = [[0, I_k], [-I_k, 0]]."""
    j = np.zeros((2 * k, 2 * k))
    j[:k, k:] = np.eye(k)
    j[k:, :k] = -np.eye(k)
    return j


def phi_assemble(u: PhiBlockMatrix) -> np.ndarray:
    """Dense 2n x 2k assembly [[X, conj(Y)], [Y, conj(X)]]."""
    x, y = u.x_block, u.y_block
    return np.block([[x, y.conj()], [y, x.conj()]])


def phi_adjoint(u: PhiBlockMatrix) -> PhiBlockMatrix:
    """Conjugate transpose; Phi(X, Y)^H = Phi(X^H, Y^T) is again structured."""
    return PhiBlockMatrix(u.x_block.conj().T, u.y_block.T)


def phi_concat(*blocks: PhiBlockMatrix) -> PhiBlockMatrix:
    """Horizontal concatenation of structured matrices with equal row count."""
    xs = [b.x_block for b in blocks]
    ys = [b.y_block for b in blocks]
    return PhiBlockMatrix(np.hstack(xs), np.hstack(ys))


def phi_col_blocks(u: PhiBlockMatrix, start: int, stop: int) -> PhiBlockMatrix:
    """Structured column-block slice: generator columns start:stop."""
    return PhiBlockMatrix(
        u.x_block[:, start:stop].copy(), u.y_block[:, start:stop].copy()
    )


def phi_product(u: PhiBlockMatrix, v: PhiBlockMatrix) -> PhiBlockMatrix:
    """Structured product Phi(U) @ Phi(V), closed in the generator form.

    W_X = U_X V_X + conj(U_Y) V_Y and W_Y = U_Y V_X + conj(U_X) V_Y; the
    assembled result agrees with the dense product of the assemblies.
    """
    if u.block_cols != v.block_rows:
        raise ValueError(
            f"inner dimensions mismatch: {u.shape} @ {v.shape}"
        )
    ux, uy = u.x_block, u.y_block
    vx, vy = v.x_block, v.y_block
    wx = ux @ vx + uy.conj() @ vy
    wy = uy @ vx + ux.conj() @ vy
    return PhiBlockMatrix(wx, wy)


def omega_apply(p: BSHProblem, u: PhiBlockMatrix) -> PhiBlockMatrix:
    """Structured action of Omega: Omega @ Phi(U) as a Phi matrix.

    V_X = A U_X + B U_Y,  V_Y = conj(B) U_X + conj(A) U_Y.
    """
    if u.block_rows != p.n:
        raise ValueError(
            f"problem dimension {p.n} does not match block rows {u.block_rows}"
        )
    a, b = p.a_block, p.b_block
    vx = a @ u.x_block + b @ u.y_block
    vy = b.conj() @ u.x_block + a.conj() @ u.y_block
    return PhiBlockMatrix(vx, vy)


def omega_apply_dense(p: BSHProblem, g: np.ndarray) -> np.ndarray:
    """Apply Omega to an unstructured 2n x m array (norm sketches, tests)."""
    n = p.n
    if g.shape[0] != 2 * n:
        raise ValueError(f"expected {2 * n} rows, got {g.shape[0]}")
    a, b = p.a_block, p.b_block
    top, bot = g[:n], g[n:]
    return np.vstack([a @ top + b @ bot, b.conj() @ top + a.conj() @ bot])


def omega_assemble(p: BSHProblem) -> np.ndarray:
    """Dense 2n x 2n Omega = [[A, B], [conj(B), conj(A)]] (oracle support)."""
    a = np.asarray(p.a_block, dtype=np.complex128)
    b = np.asarray(p.b_block, dtype=np.complex128)
    return np.block([[a, b], [b.conj(), a.conj()]])


@dataclass(frozen=True, eq=False)
class CGramPair:
    """Generators (G1, G2) of a C_n-metric Gram matrix.

    The assembled 2k x 2m matrix is [[G1, G2], [-conj(G2), -conj(G1)]].
    For a self-Gram, G1 is Hermitian and G2 is complex skew-symmetric up to
    roundoff.
    """

    g1: np.ndarray
    g2: np.ndarray

    def assemble(self) -> np.ndarray:
        g1, g2 = self.g1, self.g2
        return np.block([[g1, g2], [-g2.conj(), -g1.conj()]])


@dataclass(frozen=True, eq=False)
class PhiGramPair:
    """Generators (K1, K2) of a Phi-structured Gram matrix Phi(K1, K2).

    The assembled matrix is [[K1, conj(K2)], [K2, conj(K1)]]; for a
    self-Gram in the Omega metric K1 is Hermitian and K2 is complex
    symmetric, so the assembly is Hermitian.
    """

    k1: np.ndarray
    k2: np.ndarray

    def assemble(self) -> np.ndarray:
        k1, k2 = self.k1, self.k2
        return np.block([[k1, k2.conj()], [k2, k1.conj()]])


def c_gram(u: PhiBlockMatrix, v: PhiBlockMatrix) -> CGramPair:
    """Structured Gram Phi(U)^H C_n Phi(V) as a :class:`CGramPair`.

    G1 = U_X^H V_X - U_Y^H V_Y,  G2 = U_X^H conj(V_Y) - U_Y^H conj(V_X).
    """
    if u.block_rows != v.block_rows:
        raise ValueError("row dimensions differ")
    uxh = u.x_block.conj().T
    uyh = u.y_block.conj().T
    g1 = uxh @ v.x_block - uyh @ v.y_block
    g2 = uxh @ v.y_block.conj() - uyh @ v.x_block.conj()
    return CGramPair(g1, g2)


def omega_gram(p: BSHProblem, u: PhiBlockMatrix, v: PhiBlockMatrix) -> PhiGramPair:
    """Structured Gram Phi(U)^H Omega Phi(V) as a :class:`PhiGramPair`."""
    w = omega_apply(p, v)
    uxh = u.x_block.conj().T
    uyh = u.y_block.conj().T
    k1 = uxh @ w.x_block + uyh @ w.y_block
    # (2,1) generator of the assembled Phi(K1, K2).
    k2 = u.y_block.T @ w.x_block + u.x_block.T @ w.y_block
    return PhiGramPair(k1, k2)


def estimate_omega_norm(p: BSHProblem, sketch_cols: int = 6, seed: int = 0) -> float:
    """Randomized two-norm estimate ||Omega G||_F / ||G||_F.

    G is a seeded standard complex Gaussian 2n x t matrix (real and
    imaginary parts each N(0, 1/2)); the distribution choice is ours, the
    estimate is scale-exact and deterministic given the seed.  The result
    is cached on the problem per (t, seed).
    """
    if sketch_cols < 1:
        raise ValueError("sketch_cols must be >= 1")
    key = (int(sketch_cols), int(seed))
    cached = p._norm_cache.get(key)
    if cached is not None:
        return cached
    rng = np.random.default_rng(seed)
    shape = (2 * p.n, sketch_cols)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    est = float(np.linalg.norm(omega_apply_dense(p, g)) / np.linalg.norm(g))
    p._norm_cache[key] = est
    return est
