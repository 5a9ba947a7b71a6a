"""Matrix Market (.mtx) reader and writer.

Supports array and coordinate formats, real/integer/complex fields, and
general/symmetric/hermitian symmetry qualifiers.  Parse failures carry
the offending line number; values are written with full shortest-
round-trip precision so array files survive a write/read cycle bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MatrixMarketError", "MMInfo", "read_matrix_market", "write_matrix_market"]

_FORMATS = ("array", "coordinate")
_FIELDS = ("real", "integer", "complex")
_SYMMETRIES = ("general", "symmetric", "hermitian")


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class MMInfo:
    format: str
    field: str
    symmetry: str
    comments: tuple


def _parse_header(line, ln):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", ln)
    _, obj, fmt, field, sym = (p.lower() for p in parts)
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", ln)
    if fmt not in _FORMATS:
        raise MatrixMarketError(f"unsupported format {fmt!r}", ln)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {field!r}", ln)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", ln)
    return fmt, field, sym


def _parse_value(tokens, field, ln):
    try:
        if field == "complex":
            if len(tokens) != 2:
                raise ValueError
            return complex(float(tokens[0]), float(tokens[1]))
        if len(tokens) != 1:
            raise ValueError
        return float(tokens[0])
    except ValueError:
        raise MatrixMarketError(
            f"cannot parse {field} value from {' '.join(tokens)!r}", ln
        )


def read_matrix_market(path):
    """Read a .mtx file; returns ``(matrix, MMInfo)``.

    Symmetric/hermitian storage is expanded to the full matrix; such
    files must contain only lower-triangle entries (coordinate) or the
    packed lower triangle column by column (array).
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    fmt, field, sym = _parse_header(lines[0], 1)
    comments = []
    ln = 1
    size_line = None
    for ln in range(2, len(lines) + 1):
        stripped = lines[ln - 1].strip()
        if stripped.startswith("%"):
            comments.append(stripped[1:].strip())
            continue
        if stripped:
            size_line = stripped
            break
    if size_line is None:
        raise MatrixMarketError("missing size line", len(lines))
    dtype = complex if field == "complex" else float
    info = MMInfo(fmt, field, sym, tuple(comments))

    if fmt == "array":
        dims = size_line.split()
        if len(dims) != 2:
            raise MatrixMarketError("array size line must be 'rows cols'", ln)
        try:
            rows, cols = int(dims[0]), int(dims[1])
        except ValueError:
            raise MatrixMarketError(f"bad size line {size_line!r}", ln)
        if sym != "general" and rows != cols:
            raise MatrixMarketError("symmetric array must be square", ln)
        mat = np.zeros((rows, cols), dtype=dtype)
        # column-major; packed lower triangle for symmetric/hermitian
        entries = (
            [(i, j) for j in range(cols) for i in range(rows)]
            if sym == "general"
            else [(i, j) for j in range(cols) for i in range(j, rows)]
        )
        idx = 0
        for ln2 in range(ln + 1, len(lines) + 1):
            stripped = lines[ln2 - 1].strip()
            if not stripped or stripped.startswith("%"):
                continue
            if idx >= len(entries):
                raise MatrixMarketError("more data than expected", ln2)
            val = _parse_value(stripped.split(), field, ln2)
            i, j = entries[idx]
            mat[i, j] = val
            if sym != "general" and i != j:
                mat[j, i] = np.conj(val) if sym == "hermitian" else val
            idx += 1
        if idx < len(entries):
            raise MatrixMarketError(
                f"truncated data: expected {len(entries)} values, got {idx}",
                len(lines),
            )
        return mat, info

    dims = size_line.split()
    if len(dims) != 3:
        raise MatrixMarketError("coordinate size line must be 'rows cols nnz'", ln)
    try:
        rows, cols, nnz = int(dims[0]), int(dims[1]), int(dims[2])
    except ValueError:
        raise MatrixMarketError(f"bad size line {size_line!r}", ln)
    if sym != "general" and rows != cols:
        raise MatrixMarketError("symmetric matrix must be square", ln)
    mat = np.zeros((rows, cols), dtype=dtype)
    seen = set()
    count = 0
    for ln2 in range(ln + 1, len(lines) + 1):
        stripped = lines[ln2 - 1].strip()
        if not stripped or stripped.startswith("%"):
            continue
        tokens = stripped.split()
        if len(tokens) < 3:
            raise MatrixMarketError(f"bad coordinate entry {stripped!r}", ln2)
        try:
            i, j = int(tokens[0]) - 1, int(tokens[1]) - 1
        except ValueError:
            raise MatrixMarketError(f"bad indices in {stripped!r}", ln2)
        if not (0 <= i < rows and 0 <= j < cols):
            raise MatrixMarketError(f"index out of range in {stripped!r}", ln2)
        if sym != "general" and i < j:
            raise MatrixMarketError(
                "upper-triangle entry in symmetric-marked file", ln2
            )
        if (i, j) in seen:
            raise MatrixMarketError(f"duplicate entry ({i + 1}, {j + 1})", ln2)
        seen.add((i, j))
        val = _parse_value(tokens[2:], field, ln2)
        mat[i, j] = val
        if sym != "general" and i != j:
            mat[j, i] = np.conj(val) if sym == "hermitian" else val
        count += 1
    if count != nnz:
        raise MatrixMarketError(
            f"truncated data: expected {nnz} entries, got {count}", len(lines)
        )
    return mat, info


def _fmt_value(v, field):
    if field == "complex":
        return f"{repr(float(v.real))} {repr(float(v.imag))}"
    return repr(float(np.real(v)))


def write_matrix_market(path, matrix, fmt="array", symmetry="general", comments=()):
    """Write a dense matrix as a .mtx file.

    ``comments`` (e.g. provenance headers) are emitted as '%' lines right
    after the banner.  Coordinate output stores nonzeros only; symmetric
    and hermitian output stores the lower triangle.
    """
    matrix = np.asarray(matrix)
    if fmt not in _FORMATS:
        raise ValueError(f"unsupported format {fmt!r}")
    if symmetry not in _SYMMETRIES:
        raise ValueError(f"unsupported symmetry {symmetry!r}")
    field = "complex" if np.iscomplexobj(matrix) else "real"
    rows, cols = matrix.shape
    if symmetry != "general" and rows != cols:
        raise ValueError("symmetric output requires a square matrix")
    out = [f"%%MatrixMarket matrix {fmt} {field} {symmetry}"]
    out.extend(f"% {c}" for c in comments)
    if fmt == "array":
        out.append(f"{rows} {cols}")
        if symmetry == "general":
            coords = ((i, j) for j in range(cols) for i in range(rows))
        else:
            coords = ((i, j) for j in range(cols) for i in range(j, rows))
        out.extend(_fmt_value(matrix[i, j], field) for i, j in coords)
    else:
        if symmetry == "general":
            coords = [(i, j) for j in range(cols) for i in range(rows)
                      if matrix[i, j] != 0]
        else:
            coords = [(i, j) for j in range(cols) for i in range(j, rows)
                      if matrix[i, j] != 0]
        out.append(f"{rows} {cols} {len(coords)}")
        out.extend(
            f"{i + 1} {j + 1} {_fmt_value(matrix[i, j], field)}"
            for i, j in coords
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")
