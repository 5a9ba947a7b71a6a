"""Batch command-line front-end: solve, generate-and-solve, benchmark.

Each solve writes a key-value summary (stable key order, full-precision
values, lossless round trip) and a comma-separated convergence history
``iter,res_max,mode,reorth,wall_ms`` suitable for external plotting.
Exit codes: 0 converged, 2 ran but did not converge, 1 operational error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .problems import (
    build_preconditioner,
    gen_known_spectrum_spd,
    gen_random_definite_bsh,
    load_matrix_market,
)
from .solver import (
    MODE_ADAPTIVE,
    ConvergenceHistory,
    IterationRecord,
    SolverConfig,
    adaptive_solve,
    lobpcg_solve,
)
from .symplectic import spd_to_bsh, symplectic_eigensolve

__all__ = ["RunSummary", "main", "console_main", "write_history", "read_history"]

OUT_DIR_ENV = "BSEIG_OUT"
HISTORY_COLUMNS = "iter,res_max,mode,reorth,wall_ms"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; we reserve 2 for
    # "ran but unconverged", so usage problems are routed to exit 1.
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


@dataclass
class RunSummary:
    """Machine-readable run summary; text round trip is lossless."""

    command: str
    provenance: str
    n: int
    mode: str
    l: int
    k: int
    tol: float
    max_iter: int
    seed: int
    precond: str
    converged: bool
    iterations: int
    switch_iteration: int | None
    wall_seconds: float
    eigenvalues: tuple
    residuals: tuple
    j_residual: float | None = None
    diag_residual: float | None = None
    trace_residual: float | None = None

    _SCALARS = (
        "command", "provenance", "n", "mode", "l", "k", "tol", "max_iter",
        "seed", "precond", "converged", "iterations", "switch_iteration",
        "wall_seconds", "j_residual", "diag_residual", "trace_residual",
    )

    def to_text(self) -> str:
        lines = []
        for name in self._SCALARS:
            value = getattr(self, name)
            if value is None and name in (
                "j_residual", "diag_residual", "trace_residual"
            ):
                continue
            lines.append(f"{name} = {_fmt(value)}")
        for i, v in enumerate(self.eigenvalues, start=1):
            lines.append(f"eigenvalue_{i} = {repr(float(v))}")
        for i, v in enumerate(self.residuals, start=1):
            lines.append(f"residual_{i} = {repr(float(v))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunSummary":
        raw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition(" = ")
            raw[key] = value
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for name in cls._SCALARS:
            if name not in raw:
                kwargs[name] = None
                continue
            kwargs[name] = _parse(raw[name], types[name])
        for seq, prefix in (("eigenvalues", "eigenvalue"), ("residuals", "residual")):
            items = []
            i = 1
            while f"{prefix}_{i}" in raw:
                items.append(float(raw[f"{prefix}_{i}"]))
                i += 1
            kwargs[seq] = tuple(items)
        return cls(**kwargs)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text, ftype):
    if text == "none":
        return None
    if "bool" in str(ftype):
        return text == "true"
    if "float" in str(ftype):
        return float(text)
    if "int" in str(ftype):
        return int(text)
    return text


def _atomic_write(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-bseig-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_history(path, history: ConvergenceHistory):
    lines = [HISTORY_COLUMNS]
    for r in history.records:
        lines.append(
            f"{r.index},{repr(r.res_max)},{r.mode},"
            f"{int(r.reorth_triggered)},{r.wall_ms:.3f}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def read_history(path) -> ConvergenceHistory:
    """Parse a history CSV back into a minimal ConvergenceHistory."""
    history = ConvergenceHistory()
    with open(path) as fh:
        header = fh.readline().strip()
        if header != HISTORY_COLUMNS:
            raise ValueError(f"unexpected history header {header!r}")
        for line in fh:
            idx, res_max, mode, reorth, wall = line.strip().split(",")
            history.append(
                IterationRecord(
                    index=int(idx),
                    res_max=float(res_max),
                    residuals=(),
                    theta=(),
                    mode=mode,
                    reorth_triggered=bool(int(reorth)),
                    events=(),
                    wall_ms=float(wall),
                )
            )
    return history


def _add_solver_flags(p):
    p.add_argument("--l", type=int, required=True, help="desired eigenpair count")
    p.add_argument("--k", type=int, default=None, help="block size (default: rule)")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument(
        "--mode", default="adaptive",
        choices=["c", "cihl", "omega-ihl", "adaptive"],
    )
    p.add_argument(
        "--precond", default="diag-a",
        choices=["identity", "diag-a", "block-diag-ab"],
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory")


def _build_parser():
    parser = _Parser(prog="bseig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_bse = sub.add_parser("solve-bse", help="solve a definite BSH problem")
    p_bse.add_argument("--a", dest="path_a", help="Matrix Market file for A")
    p_bse.add_argument("--b", dest="path_b", help="Matrix Market file for B")
    p_bse.add_argument("--gen", help="generator spec random:<n>:<seed>")
    _add_solver_flags(p_bse)

    p_sym = sub.add_parser(
        "solve-symplectic", help="symplectic eigenvalues of a real spd matrix"
    )
    p_sym.add_argument("--m", dest="path_m", help="Matrix Market file for M")
    p_sym.add_argument("--gen", help="generator spec known:<n>:<seed>")
    _add_solver_flags(p_sym)

    p_bench = sub.add_parser("bench", help="variant comparison table")
    p_bench.add_argument("--suite", required=True, choices=["bse", "symplectic"])
    p_bench.add_argument("--sizes", required=True, help="comma list of n")
    p_bench.add_argument("--seeds", default="0", help="comma list of seeds")
    p_bench.add_argument(
        "--modes", default="cihl,adaptive", help="comma list of modes"
    )
    p_bench.add_argument("--l", type=int, default=4)
    p_bench.add_argument("--tol", type=float, default=1e-12)
    p_bench.add_argument("--max-iter", type=int, default=200)
    p_bench.add_argument("--out", default=None)
    return parser


def _out_dir(args):
    out = args.out or os.environ.get(OUT_DIR_ENV) or "bseig-out"
    os.makedirs(out, exist_ok=True)
    return out


def _parse_gen(spec, expected_kind):
    parts = spec.split(":")
    if len(parts) != 3 or parts[0] != expected_kind:
        raise _UsageError(
            f"bad generator spec {spec!r}; expected {expected_kind}:<n>:<seed>"
        )
    try:
        return int(parts[1]), int(parts[2])
    except ValueError:
        raise _UsageError(f"bad generator spec {spec!r}")


def _make_config(args, mode):
    if args.l < 1:
        raise _UsageError("--l must be >= 1")
    return SolverConfig(
        l=args.l,
        k=args.k,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        mode=mode,
    )


def _run_variant(problem, precond, cfg, mode):
    if mode == MODE_ADAPTIVE:
        return adaptive_solve(problem, precond, cfg)
    return lobpcg_solve(problem, precond, cfg)


def _emit(out_dir, summary, history, stdout):
    _atomic_write(os.path.join(out_dir, "summary.txt"), summary.to_text())
    write_history(os.path.join(out_dir, "history.csv"), history)
    stdout.write(summary.to_text())


def _cmd_solve_bse(args, stdout):
    if bool(args.gen) == bool(args.path_a):
        raise _UsageError("need exactly one of --gen or --a")
    if args.gen:
        n, seed = _parse_gen(args.gen, "random")
        gp = gen_random_definite_bsh(n, seed)
    else:
        if not args.path_b:
            raise _UsageError("--a requires --b")
        gp = load_matrix_market(args.path_a, args.path_b, kind="bsh")
    problem = gp.problem
    cfg = _make_config(args, args.mode)
    precond = build_preconditioner(problem, args.precond.replace("-", "_"))
    sol = _run_variant(problem, precond, cfg, args.mode)
    last = sol.history.records[-1]
    summary = RunSummary(
        command="solve-bse",
        provenance=gp.provenance,
        n=problem.n,
        mode=args.mode,
        l=cfg.l,
        k=cfg.k,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        seed=cfg.seed,
        precond=args.precond,
        converged=sol.converged,
        iterations=last.index,
        switch_iteration=sol.switch_iteration,
        wall_seconds=sum(r.wall_ms for r in sol.history.records) / 1e3,
        eigenvalues=tuple(float(v) for v in sol.eigenvalues),
        residuals=last.residuals,
    )
    _emit(_out_dir(args), summary, sol.history, stdout)
    return 0 if sol.converged else 2


def _cmd_solve_symplectic(args, stdout):
    if bool(args.gen) == bool(args.path_m):
        raise _UsageError("need exactly one of --gen or --m")
    if args.gen:
        n, seed = _parse_gen(args.gen, "known")
        gp = gen_known_spectrum_spd(n, seed)
    else:
        gp = load_matrix_market(args.path_m, kind="spd")
    m = gp.problem
    cfg = _make_config(args, args.mode)
    bsh = spd_to_bsh(m)
    precond = build_preconditioner(bsh, args.precond.replace("-", "_"))
    result = symplectic_eigensolve(m, args.l, cfg, precond)
    sol = result.solution
    last = sol.history.records[-1]
    summary = RunSummary(
        command="solve-symplectic",
        provenance=gp.provenance,
        n=m.shape[0] // 2,
        mode=args.mode,
        l=cfg.l,
        k=cfg.k,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        seed=cfg.seed,
        precond=args.precond,
        converged=sol.converged,
        iterations=last.index,
        switch_iteration=sol.switch_iteration,
        wall_seconds=sum(r.wall_ms for r in sol.history.records) / 1e3,
        eigenvalues=tuple(float(v) for v in result.eigenvalues),
        residuals=last.residuals,
        j_residual=result.j_residual,
        diag_residual=result.diag_residual,
        trace_residual=result.trace_residual,
    )
    _emit(_out_dir(args), summary, sol.history, stdout)
    return 0 if sol.converged else 2


def _parse_int_list(text, flag):
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise _UsageError(f"{flag} must be a nonempty comma list")
    try:
        return [int(t) for t in items]
    except ValueError:
        raise _UsageError(f"bad integer list for {flag}: {text!r}")


def _cmd_bench(args, stdout):
    sizes = _parse_int_list(args.sizes, "--sizes")
    seeds = _parse_int_list(args.seeds, "--seeds")
    modes = [m for m in args.modes.split(",") if m.strip()]
    valid = {"c", "cihl", "omega-ihl", "adaptive"}
    if not modes or any(m not in valid for m in modes):
        raise _UsageError(f"--modes must be a comma list from {sorted(valid)}")
    rows = []
    all_converged = True
    for n in sizes:
        for seed in seeds:
            if args.suite == "bse":
                gp = gen_random_definite_bsh(n, seed)
                problem = gp.problem
            else:
                gp = gen_known_spectrum_spd(n, seed)
                problem = spd_to_bsh(gp.problem)
            precond = build_preconditioner(problem, "diag_a")
            for mode in modes:
                cfg = SolverConfig(
                    l=args.l, tol=args.tol, max_iter=args.max_iter,
                    seed=seed, mode=mode,
                )
                sol = _run_variant(problem, precond, cfg, mode)
                last = sol.history.records[-1]
                wall = sum(r.wall_ms for r in sol.history.records) / 1e3
                all_converged &= sol.converged
                rows.append(
                    (n, seed, mode, last.index, wall, last.res_max,
                     sol.converged)
                )
    header = (
        f"{'n':>6} {'seed':>6} {'mode':>10} {'iters':>6} "
        f"{'time_s':>10} {'res_max':>12} {'conv':>5}"
    )
    lines = [f"suite = {args.suite}", header, "-" * len(header)]
    for n, seed, mode, iters, wall, res, conv in rows:
        flag = "yes" if conv else "NO*"
        lines.append(
            f"{n:>6} {seed:>6} {mode:>10} {iters:>6} "
            f"{wall:>10.3f} {res:>12.3e} {flag:>5}"
        )
    if not all_converged:
        lines.append("* desired accuracy not reached within the limits")
    table = "\n".join(lines) + "\n"
    _atomic_write(os.path.join(_out_dir(args), "bench.txt"), table)
    stdout.write(table)
    return 0 if all_converged else 2


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "solve-bse":
            return _cmd_solve_bse(args, stdout)
        if args.command == "solve-symplectic":
            return _cmd_solve_symplectic(args, stdout)
        return _cmd_bench(args, stdout)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"bseig: error: {exc}", file=sys.stderr)
        return 1


def console_main():
    sys.exit(main())
