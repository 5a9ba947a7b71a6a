"""Iterative LOBPCG drivers for the definite BSH eigenvalue problem.

Three variants share one engine: the plain C-metric iteration (full CGS2
every step, no basis-update trick), the C-metric iteration with the
structured update trick and selective reorthogonalization, and the
Omega-metric iteration.  The adaptive driver starts in the cheap C-metric
variant and switches permanently to the Omega variant when the
convergence curve stalls.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BSHProblem,
    NeutralBreakdownError,
    NotPositiveDefiniteError,
    PhiBlockMatrix,
    UNIT_ROUNDOFF,
    estimate_omega_norm,
    phi_col_blocks,
    phi_concat,
    phi_product,
)
from .dense import dense_bse_solve
from .ihl import (
    ihl_update_c,
    ihl_update_omega,
    rayleigh_ritz,
    rayleigh_ritz_omega,
    reorthonormalize_pair_c,
    reorthonormalize_pair_omega,
    selective_reorth_needed,
)
from .ortho import (
    NEUTRAL_TOL_DEFAULT,
    c_orthonormalize_cgs,
    c_project_against,
    omega_orthonormalize,
    svqb_indefinite,
)

__all__ = [
    "MODE_C",
    "MODE_CIHL",
    "MODE_OMEGA_IHL",
    "MODE_ADAPTIVE",
    "default_block_size",
    "SolverConfig",
    "IterationRecord",
    "ConvergenceHistory",
    "Preconditioner",
    "Solution",
    "compute_residuals",
    "apply_preconditioner",
    "slope",
    "switch_decision",
    "lobpcg_solve",
    "adaptive_solve",
]

MODE_C = "c"
MODE_CIHL = "cihl"
MODE_OMEGA_IHL = "omega-ihl"
MODE_ADAPTIVE = "adaptive"
_MODE_DENSE = "dense"


def default_block_size(l: int) -> int:
    """Block size rule k = max(ceil(3l/2), l + 5)."""
    return max((3 * l + 1) // 2, l + 5)


@dataclass
class SolverConfig:
    """Solver parameters; defaults follow the standard operating regime."""

    l: int
    k: int | None = None
    tol: float = 1e-14
    max_iter: int = 200
    tau0: float = 1.49e-8  # ~ u^(1/2)
    slope_monitor_threshold: float = 1e-10
    slope_windows: tuple = (5, 10)
    neutral_tol: float = NEUTRAL_TOL_DEFAULT
    seed: int = 0
    mode: str = MODE_ADAPTIVE
    norm_sketch_cols: int = 6

    def __post_init__(self):
        if self.k is None:
            self.k = default_block_size(self.l)
        if not (self.k >= self.l >= 1):
            raise ValueError(f"need k >= l >= 1, got k={self.k}, l={self.l}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    """One convergence-history record.

    ``res_max``/``residuals`` refer to the first l pairs; ``mode`` labels
    the variant that produced the iterate; ``events`` collects breakdown,
    fallback, and switch markers of the step leading to this iterate.
    """

    index: int
    res_max: float
    residuals: tuple
    theta: tuple
    mode: str
    reorth_triggered: bool
    events: tuple
    wall_ms: float


@dataclass
class ConvergenceHistory:
    records: list = field(default_factory=list)

    def append(self, record: IterationRecord):
        self.records.append(record)

    def res_max_series(self):
        return [r.res_max for r in self.records]

    def switch_iteration(self):
        """Index of the first Omega-metric record after a C-metric one."""
        for prev, cur in zip(self.records, self.records[1:]):
            if prev.mode == MODE_CIHL and cur.mode == MODE_OMEGA_IHL:
                return cur.index
        return None


@dataclass(frozen=True, eq=False)
class Preconditioner:
    """Structured preconditioner T+ applied to residual blocks.

    Kinds: ``identity``; ``diag_a`` (inverse of diag(A) on the X
    generator, its conjugate on Y); ``block_diag_ab`` (per-index 2x2
    structured solve with the diagonals of A and B); ``user_operator`` (a
    callable mapping PhiBlockMatrix to PhiBlockMatrix; the caller is
    responsible for the Hermitian-definite operator contract, under which
    the partner operator T- = C J conj(T+) C J is implied and the
    preconditioned residuals keep the Phi structure).
    """

    kind: str
    diag_a: np.ndarray | None = None
    diag_b: np.ndarray | None = None
    block_det: np.ndarray | None = None
    operator: object = None


def apply_preconditioner(t: Preconditioner, r: PhiBlockMatrix) -> PhiBlockMatrix:
    """Apply the structured preconditioner to a residual block."""
    if t.kind == "identity":
        return r
    if t.kind == "diag_a":
        d = t.diag_a[:, None]
        return PhiBlockMatrix(r.x_block / d, r.y_block / d.conj())
    if t.kind == "block_diag_ab":
        a = t.diag_a[:, None]
        b = t.diag_b[:, None]
        det = t.block_det[:, None]
        wx = (a * r.x_block - b * r.y_block) / det
        wy = (a * r.y_block - b.conj() * r.x_block) / det
        return PhiBlockMatrix(wx, wy)
    if t.kind == "user_operator":
        out = t.operator(r)
        if not isinstance(out, PhiBlockMatrix):
            raise TypeError("user preconditioner must return a PhiBlockMatrix")
        return out
    raise ValueError(f"unknown preconditioner kind {t.kind!r}")


def compute_residuals(
    p: BSHProblem,
    z: PhiBlockMatrix,
    theta: np.ndarray,
    omega_norm: float | None = None,
):
    """Structured residual block and normalized per-pair residuals.

    R_X = A Z_X + B Z_Y - Z_X diag(theta),
    R_Y = conj(B) Z_X + conj(A) Z_Y + Z_Y diag(theta);
    res_i = ||r_i||_2 / ((||Omega||_2 estimate + theta_i) ||z_i||_2).
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ValueError("Ritz values must be positive")
    a, b = p.a_block, p.b_block
    rx = a @ z.x_block + b @ z.y_block - z.x_block * theta
    ry = b.conj() @ z.x_block + a.conj() @ z.y_block + z.y_block * theta
    if omega_norm is None:
        omega_norm = estimate_omega_norm(p)
    rnorm = np.sqrt(
        np.sum(np.abs(rx) ** 2, axis=0) + np.sum(np.abs(ry) ** 2, axis=0)
    )
    znorm = np.sqrt(
        np.sum(np.abs(z.x_block) ** 2, axis=0)
        + np.sum(np.abs(z.y_block) ** 2, axis=0)
    )
    res = rnorm / ((omega_norm + theta) * znorm)
    return PhiBlockMatrix(rx, ry), res


def slope(history: ConvergenceHistory, p: int):
    """Secant slope of log10(res_max) between records k-p and k.

    Returns None when fewer than p+1 records exist or any involved
    residual is nonpositive (caller treats this as "no switch").
    """
    recs = history.records
    if len(recs) < p + 1:
        return None
    r_now = recs[-1].res_max
    r_then = recs[-1 - p].res_max
    if r_now <= 0 or r_then <= 0:
        return None
    return (np.log10(r_now) - np.log10(r_then)) / p


def switch_decision(
    history: ConvergenceHistory,
    monitor_threshold: float = 1e-10,
    windows: tuple = (5, 10),
) -> bool:
    """Stagnation test driving the C-to-Omega switch.

    Monitoring begins once res_max first falls below
    ``monitor_threshold`` and stays active from then on; while active, a
    switch fires when the residual rises above its two predecessors, or
    when the short secant slope exceeds half the long one (the curve
    flattens relative to its linear trend).
    """
    recs = history.records
    if not recs:
        return False
    cur = recs[-1].res_max
    if cur <= 0:
        return False
    if not any(0 < r.res_max < monitor_threshold for r in recs):
        return False
    if len(recs) >= 3 and cur > max(recs[-2].res_max, recs[-3].res_max):
        return True
    s_short = slope(history, windows[0])
    s_long = slope(history, windows[1])
    if s_short is not None and s_long is not None and s_short > 0.5 * s_long:
        return True
    return False


@dataclass(frozen=True, eq=False)
class Solution:
    """Final l eigenpairs with the convergence history."""

    eigenvalues: np.ndarray
    eigvecs: PhiBlockMatrix
    converged: bool
    history: ConvergenceHistory

    @property
    def switch_iteration(self):
        return self.history.switch_iteration()


class _Driver:
    """Single-problem solver engine; one instance per solve, not reusable.

    Test hooks may mutate ``z``, ``p_dir``, ``theta`` and read ``mode`` /
    ``iteration`` between iterations.
    """

    def __init__(self, problem, precond, cfg, x0, y0, adaptive, hook):
        self.problem = problem
        self.precond = precond
        self.cfg = cfg
        self.hook = hook
        self.adaptive = adaptive
        self.history = ConvergenceHistory()
        self.k = cfg.k
        self.l = cfg.l
        self.iteration = 0
        self.p_dir = None
        self.needs_c_restore = False
        self._pending_events = []
        self._pending_reorth = False
        n = problem.n
        if adaptive:
            self.mode = MODE_CIHL
        else:
            if cfg.mode not in (MODE_C, MODE_CIHL, MODE_OMEGA_IHL):
                raise ValueError(
                    f"mode must be one of {MODE_C!r}, {MODE_CIHL!r}, "
                    f"{MODE_OMEGA_IHL!r}; got {cfg.mode!r} "
                    f"(use adaptive_solve for the adaptive driver)"
                )
            self.mode = cfg.mode
        if 3 * self.k > n:
            raise ValueError(
                f"search space 6k={6 * self.k} does not fit in dimension "
                f"2n={2 * n}; reduce k or solve densely"
            )
        self.omega_norm = estimate_omega_norm(
            problem, min(cfg.norm_sketch_cols, 2 * n), cfg.seed
        )
        rng = np.random.default_rng(cfg.seed)
        if x0 is None or y0 is None:
            shape = (n, self.k)
            x0 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            y0 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        z0 = PhiBlockMatrix(np.asarray(x0), np.asarray(y0))
        if z0.block_rows != n or z0.block_cols != self.k:
            raise ValueError(
                f"initial generators must be {n} x {self.k}, got "
                f"{z0.x_block.shape}"
            )
        self.basis_metric = "omega" if self.mode == MODE_OMEGA_IHL else "c"
        self.z = self._orthonormalize_initial(z0)
        self._initial_ritz()

    # -- deterministic per-iteration random streams ---------------------
    def _rng(self, tag: int):
        return np.random.default_rng([self.cfg.seed, self.iteration, tag])

    def _orthonormalize_initial(self, z0):
        if self.basis_metric == "omega":
            z, _ = omega_orthonormalize(
                self.problem, z0, on_deficient="replace", rng=self._rng(2),
                compute_report=False,
            )
            return z
        try:
            z, _ = c_orthonormalize_cgs(
                z0, passes=2, neutral_tol=self.cfg.neutral_tol,
                compute_report=False,
            )
            return z
        except NeutralBreakdownError as exc:
            self._pending_events.append(
                f"neutral-breakdown-block-{exc.block}"
            )
            self._pending_events.append("omega-fallback")
            self.basis_metric = "omega"
            if self.mode != MODE_OMEGA_IHL:
                self.needs_c_restore = True
            z, _ = omega_orthonormalize(
                self.problem, z0, on_deficient="replace", rng=self._rng(2),
                compute_report=False,
            )
            return z

    def _initial_ritz(self):
        if self.basis_metric == "c":
            try:
                ritz = rayleigh_ritz(self.problem, self.z)
            except NotPositiveDefiniteError:
                self._pending_events.append("omega-fallback")
                self.basis_metric = "omega"
                self.needs_c_restore = self.mode != MODE_OMEGA_IHL
                self.z, _ = omega_orthonormalize(
                    self.problem, self.z, on_deficient="replace",
                    rng=self._rng(2), compute_report=False,
                )
                ritz = rayleigh_ritz_omega(self.problem, self.z)
        else:
            ritz = rayleigh_ritz_omega(self.problem, self.z)
        self.z = phi_product(self.z, ritz.v_matrix)
        self.theta = ritz.theta_plus

    # -- one iteration ---------------------------------------------------
    def step(self, residual_block, res_max):
        if self.mode == MODE_OMEGA_IHL:
            self._step_omega(residual_block)
        elif self.mode == MODE_CIHL:
            self._step_cihl(residual_block, res_max)
        else:
            self._step_c(residual_block)

    def _zp(self):
        if self.p_dir is None:
            return self.z
        return phi_concat(self.z, self.p_dir)

    def _step_c(self, r):
        w = apply_preconditioner(self.precond, r)
        u_raw = phi_concat(self._zp(), w)
        metric = "c"
        try:
            u, _ = c_orthonormalize_cgs(
                u_raw, passes=2, neutral_tol=self.cfg.neutral_tol,
                compute_report=False,
            )
            try:
                ritz = rayleigh_ritz(self.problem, u)
            except NotPositiveDefiniteError:
                metric = "omega"
        except NeutralBreakdownError:
            metric = "omega"
        if metric == "omega":
            self._pending_events.append("omega-fallback")
            u, _ = omega_orthonormalize(
                self.problem, u_raw, on_deficient="replace", rng=self._rng(2),
                compute_report=False,
            )
            ritz = rayleigh_ritz_omega(self.problem, u)
        m = u.block_cols
        k = self.k
        v = ritz.v_matrix
        self.z = phi_product(u, phi_col_blocks(v, 0, k))
        # Companion block: contribution of the non-Z rows of the selected
        # Ritz coefficients; renormalized by next iteration's full CGS2.
        tail = PhiBlockMatrix(
            v.x_block[k:, :k].copy(), v.y_block[k:, :k].copy()
        )
        self.p_dir = phi_product(phi_col_blocks(u, k, m), tail)
        self.theta = ritz.theta_plus[:k]
        self.basis_metric = metric

    def _step_cihl(self, r, res_max):
        cfg = self.cfg
        if self.needs_c_restore:
            # Previous iteration left an Omega-orthonormal pair behind.
            zp_raw = self._zp()
            try:
                zp, _ = c_orthonormalize_cgs(
                    zp_raw, passes=2, neutral_tol=cfg.neutral_tol,
                    compute_report=False,
                )
                k = self.k
                self.z = phi_col_blocks(zp, 0, k)
                if zp.block_cols > k:
                    self.p_dir = phi_col_blocks(zp, k, zp.block_cols)
                self.needs_c_restore = False
                self.basis_metric = "c"
            except NeutralBreakdownError:
                w = apply_preconditioner(self.precond, r)
                self._omega_emergency(phi_concat(zp_raw, w))
                return
        w = apply_preconditioner(self.precond, r)
        zp = self._zp()
        try:
            wq = c_project_against(w, zp)
            wq = c_project_against(wq, zp)
            wq, _ = svqb_indefinite(
                wq, reorth=True, neutral_tol=cfg.neutral_tol,
                compute_report=False,
            )
            u = phi_concat(zp, wq)
            # The selective strategy tolerates loss up to tau0 by design,
            # so only warn when the basis is worse than that.
            ritz = rayleigh_ritz(
                self.problem, u, loss_warn_tol=max(1e-8, 4.0 * cfg.tau0)
            )
            bases = ihl_update_c(
                u, ritz, self.k, neutral_tol=cfg.neutral_tol, rng=self._rng(1)
            )
        except (NeutralBreakdownError, NotPositiveDefiniteError) as exc:
            self._pending_events.append(f"{type(exc).__name__}")
            self._omega_emergency(phi_concat(zp, w))
            return
        self.theta = ritz.theta_plus[: self.k]
        check = selective_reorth_needed(bases, self._rng(0), cfg.tau0, res_max)
        z_new, p_new = bases.z, bases.p
        if check.needed:
            self._pending_reorth = True
            try:
                z_new, p_new = reorthonormalize_pair_c(
                    z_new, p_new, neutral_tol=cfg.neutral_tol,
                    on_breakdown="replace", rng=self._rng(3),
                )
            except NeutralBreakdownError:
                self._pending_events.append("omega-fallback")
                u2, _ = omega_orthonormalize(
                    self.problem, phi_concat(z_new, p_new),
                    on_deficient="replace", rng=self._rng(2),
                    compute_report=False,
                )
                z_new = phi_col_blocks(u2, 0, self.k)
                p_new = phi_col_blocks(u2, self.k, u2.block_cols)
                self.needs_c_restore = True
        self.z, self.p_dir = z_new, p_new
        self.basis_metric = "c" if not self.needs_c_restore else "omega"

    def _omega_emergency(self, u_raw):
        """One full iteration in the Omega metric after a C-side breakdown."""
        self._pending_events.append("omega-fallback")
        u, _ = omega_orthonormalize(
            self.problem, u_raw, on_deficient="replace", rng=self._rng(2),
            compute_report=False,
        )
        ritz = rayleigh_ritz_omega(self.problem, u)
        bases = ihl_update_omega(self.problem, u, ritz, self.k)
        self.z, self.p_dir = reorthonormalize_pair_omega(
            self.problem, bases.z, bases.p, rng=self._rng(3)
        )
        self.theta = ritz.theta_plus[: self.k]
        self.basis_metric = "omega"
        if self.mode != MODE_OMEGA_IHL:
            self.needs_c_restore = True

    def _step_omega(self, r):
        w = apply_preconditioner(self.precond, r)
        zp = self._zp()
        w2, _ = omega_orthonormalize(
            self.problem, w, against=zp, on_deficient="replace",
            rng=self._rng(2), compute_report=False,
        )
        u = phi_concat(zp, w2)
        ritz = rayleigh_ritz_omega(self.problem, u)
        bases = ihl_update_omega(self.problem, u, ritz, self.k)
        # The Omega variant buys stability with an unconditional refresh.
        self.z, self.p_dir = reorthonormalize_pair_omega(
            self.problem, bases.z, bases.p, rng=self._rng(3)
        )
        self.theta = ritz.theta_plus[: self.k]
        self._pending_reorth = True
        self.basis_metric = "omega"

    def _switch_to_omega(self):
        self._pending_events.append("switch-to-omega")
        self.z, _ = omega_orthonormalize(
            self.problem, self.z, on_deficient="replace", rng=self._rng(2),
            compute_report=False,
        )
        self.p_dir = None
        self.mode = MODE_OMEGA_IHL
        self.basis_metric = "omega"
        self.needs_c_restore = False

    # -- main loop --------------------------------------------------------
    def run(self) -> Solution:
        cfg = self.cfg
        last_t = time.perf_counter()
        converged = False
        while True:
            r, res = compute_residuals(
                self.problem, self.z, self.theta, self.omega_norm
            )
            res_l = res[: self.l]
            res_max = float(np.max(res_l))
            now = time.perf_counter()
            self.history.append(
                IterationRecord(
                    index=self.iteration,
                    res_max=res_max,
                    residuals=tuple(float(v) for v in res_l),
                    theta=tuple(float(v) for v in self.theta[: self.l]),
                    mode=self.mode,
                    reorth_triggered=self._pending_reorth,
                    events=tuple(self._pending_events),
                    wall_ms=(now - last_t) * 1e3,
                )
            )
            last_t = now
            self._pending_events = []
            self._pending_reorth = False
            if res_max <= cfg.tol:
                converged = True
                break
            if self.iteration >= cfg.max_iter:
                break
            if (
                self.adaptive
                and self.mode == MODE_CIHL
                and switch_decision(
                    self.history,
                    cfg.slope_monitor_threshold,
                    cfg.slope_windows,
                )
            ):
                self._switch_to_omega()
            self.step(r, res_max)
            if self.hook is not None:
                self.hook(self)
            self.iteration += 1
        return Solution(
            eigenvalues=np.asarray(self.theta[: self.l], dtype=float),
            eigvecs=phi_col_blocks(self.z, 0, self.l),
            converged=converged,
            history=self.history,
        )


def _dense_direct(problem, cfg) -> Solution:
    """Direct dense path used when the search space meets the full space."""
    t0 = time.perf_counter()
    spectrum = dense_bse_solve(problem)
    k = min(cfg.k, problem.n)
    z = phi_col_blocks(spectrum.eigvecs, 0, k)
    theta = spectrum.lambda_plus[:k]
    omega_norm = estimate_omega_norm(
        problem, min(cfg.norm_sketch_cols, 2 * problem.n), cfg.seed
    )
    _, res = compute_residuals(problem, z, theta, omega_norm)
    res_l = res[: cfg.l]
    res_max = float(np.max(res_l))
    history = ConvergenceHistory()
    history.append(
        IterationRecord(
            index=0,
            res_max=res_max,
            residuals=tuple(float(v) for v in res_l),
            theta=tuple(float(v) for v in theta[: cfg.l]),
            mode=_MODE_DENSE,
            reorth_triggered=False,
            events=("dense-direct",),
            wall_ms=(time.perf_counter() - t0) * 1e3,
        )
    )
    return Solution(
        eigenvalues=np.asarray(theta[: cfg.l], dtype=float),
        eigvecs=phi_col_blocks(spectrum.eigvecs, 0, cfg.l),
        converged=bool(res_max <= cfg.tol),
        history=history,
    )


def _solve(problem, precond, cfg, x0, y0, adaptive, iteration_hook):
    if cfg.l > problem.n:
        raise ValueError("cannot request more pairs than the dimension")
    # A 3k-block search space needs 6k <= 2n; at or beyond that point the
    # iteration degenerates and a direct dense solve is the right tool.
    if 6 * cfg.k >= 2 * problem.n:
        return _dense_direct(problem, cfg)
    driver = _Driver(problem, precond, cfg, x0, y0, adaptive, iteration_hook)
    return driver.run()


def lobpcg_solve(
    problem: BSHProblem,
    precond: Preconditioner,
    cfg: SolverConfig,
    x0=None,
    y0=None,
    iteration_hook=None,
) -> Solution:
    """Run one fixed LOBPCG variant (cfg.mode: c, cihl, or omega-ihl).

    The optional ``iteration_hook(driver)`` runs after every update step;
    it exists for diagnostics and testing (e.g. injecting perturbations)
    and may mutate the driver state.
    """
    if cfg.mode == MODE_ADAPTIVE:
        raise ValueError("use adaptive_solve for the adaptive driver")
    return _solve(problem, precond, cfg, x0, y0, False, iteration_hook)


def adaptive_solve(
    problem: BSHProblem,
    precond: Preconditioner,
    cfg: SolverConfig,
    x0=None,
    y0=None,
    iteration_hook=None,
) -> Solution:
    """Adaptive driver: C-metric iteration with a one-way Omega switch.

    Starts in the C-metric variant with the basis-update trick; once the
    residual is below the monitoring threshold and the curve stalls (or
    rises), the iteration switches permanently to the Omega variant,
    carrying Z over (re-orthonormalized in the Omega metric) and
    rebuilding P on the next step.
    """
    return _solve(problem, precond, cfg, x0, y0, True, iteration_hook)
