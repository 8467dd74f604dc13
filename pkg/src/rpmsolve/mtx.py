"""Matrix Market reader/writer for real dense and coordinate matrices.

Only ``real`` and ``integer`` fields are accepted (``pattern`` is read as
ones); symmetries ``general``, ``symmetric`` and ``skew-symmetric`` are
expanded to a full dense array.
"""
import os
import tempfile

import numpy as np

from .errors import MatrixMarketError

_FORMATS = {"coordinate", "array"}
_FIELDS = {"real", "integer", "pattern"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric"}


def _data_lines(lines, start):
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        text = raw.strip()
        if text and not text.startswith("%"):
            yield lineno, text


def _parse_number(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise MatrixMarketError(f"cannot parse number {token!r}", lineno) from None


def _parse_header(line):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
        raise MatrixMarketError("missing or malformed %%MatrixMarket header", 1)
    fmt, field, symmetry = (p.lower() for p in parts[2:])
    if fmt not in _FORMATS:
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
    if field == "complex":
        raise MatrixMarketError("complex matrices are not supported", 1)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {field!r}", 1)
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)
    if fmt == "array" and field == "pattern":
        raise MatrixMarketError("pattern field requires coordinate format", 1)
    return fmt, field, symmetry


def _parse_size(entries, want):
    try:
        lineno, text = next(entries)
    except StopIteration:
        raise MatrixMarketError("missing size line") from None
    tokens = text.split()
    if len(tokens) != want:
        raise MatrixMarketError(f"size line needs {want} integers", lineno)
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise MatrixMarketError("size line must contain integers", lineno) from None
    if any(v < 0 for v in values):
        raise MatrixMarketError("negative dimension", lineno)
    return values


def _mirror(M, r, c, v, symmetry):
    if r == c:
        return
    if symmetry == "symmetric":
        M[c, r] = v
    elif symmetry == "skew-symmetric":
        M[c, r] = -v


def read_matrix_market(source):
    """Parse Matrix Market text (a string) into a dense ``float`` array."""
    lines = source.splitlines()
    if not lines:
        raise MatrixMarketError("empty input", 1)
    fmt, field, symmetry = _parse_header(lines[0])
    entries = _data_lines(lines, 1)

    if fmt == "coordinate":
        nrows, ncols, nnz = _parse_size(entries, 3)
        M = np.zeros((nrows, ncols))
        want = 2 if field == "pattern" else 3
        for count in range(nnz):
            try:
                lineno, text = next(entries)
            except StopIteration:
                raise MatrixMarketError(
                    f"expected {nnz} entries, found {count}", len(lines)) from None
            tokens = text.split()
            if len(tokens) != want:
                raise MatrixMarketError(f"expected {want} fields per entry", lineno)
            try:
                r, c = int(tokens[0]) - 1, int(tokens[1]) - 1
            except ValueError:
                raise MatrixMarketError("entry indices must be integers", lineno) from None
            if not (0 <= r < nrows and 0 <= c < ncols):
                raise MatrixMarketError(f"index ({r + 1}, {c + 1}) out of range", lineno)
            v = 1.0 if field == "pattern" else _parse_number(tokens[2], lineno)
            M[r, c] = v
            _mirror(M, r, c, v, symmetry)
    else:
        nrows, ncols = _parse_size(entries, 2)
        M = np.zeros((nrows, ncols))
        if symmetry == "general":
            slots = [(r, c) for c in range(ncols) for r in range(nrows)]
        else:
            if nrows != ncols:
                raise MatrixMarketError("symmetric array matrix must be square", 2)
            lo = 0 if symmetry == "symmetric" else 1
            slots = [(r, c) for c in range(ncols) for r in range(c + lo, nrows)]
        for count, (r, c) in enumerate(slots):
            try:
                lineno, text = next(entries)
            except StopIteration:
                raise MatrixMarketError(
                    f"expected {len(slots)} values, found {count}", len(lines)) from None
            tokens = text.split()
            if len(tokens) != 1:
                raise MatrixMarketError("array format expects one value per line", lineno)
            v = _parse_number(tokens[0], lineno)
            M[r, c] = v
            _mirror(M, r, c, v, symmetry)

    extra = next(entries, None)
    if extra is not None:
        raise MatrixMarketError("unexpected trailing data", extra[0])
    return M


def load_matrix_market(path):
    """Read a ``.mtx`` file into a dense array."""
    with open(path, encoding="ascii") as fh:
        return read_matrix_market(fh.read())


def format_matrix_market(A, fmt="coordinate"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("A must be 2-D")
    nrows, ncols = A.shape
    out = [f"%%MatrixMarket matrix {fmt} real general"]
    if fmt == "coordinate":
        rows, cols = np.nonzero(A)
        out.append(f"{nrows} {ncols} {rows.size}")
        out.extend(f"{r + 1} {c + 1} {float(A[r, c])!r}" for r, c in zip(rows, cols))
    elif fmt == "array":
        out.append(f"{nrows} {ncols}")
        out.extend(repr(float(v)) for v in A.T.reshape(-1))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(out) + "\n"


def write_matrix_market(path, A, fmt="coordinate"):
    """Write ``A`` atomically (temp file + rename). Values use ``repr`` so they round-trip."""
    text = format_matrix_market(A, fmt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".mtx.tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
