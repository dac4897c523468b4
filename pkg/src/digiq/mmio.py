"""Matrix Market coordinate-format reader with line-numbered diagnostics."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, DimensionMismatch
from .operators import SparseOperator, from_entries

__all__ = ["parse_matrix_market", "read_matrix_market_text", "write_matrix_market"]

_FIELDS = ("real", "integer", "complex", "pattern")
_SYMMETRIES = ("general", "symmetric", "hermitian", "skew-symmetric")


def _num(tok: str, lineno: int) -> Fraction:
    try:
        # exact decimal -> nearest double, matching what a float parser would store
        return Fraction(float(tok))
    except ValueError:
        raise ConfigError(f"not a number: {tok!r}", line=lineno) from None


def read_matrix_market_text(text: str, name: str = "<string>") -> SparseOperator:
    lines = text.splitlines()
    if not lines:
        raise ConfigError("empty Matrix Market file", line=1)
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket":
        raise ConfigError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>' header", line=1)
    obj, fmt, fld, sym = (h.lower() for h in head[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise ConfigError(f"only 'matrix coordinate' is supported, got '{obj} {fmt}'", line=1)
    if fld not in _FIELDS:
        raise ConfigError(f"unknown field {fld!r}", line=1)
    if sym not in _SYMMETRIES:
        raise ConfigError(f"unknown symmetry {sym!r}", line=1)

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise ConfigError("missing size line", line=i + 1)
    size = lines[i].split()
    try:
        nrows, ncols, nnz = (int(x) for x in size)
    except ValueError:
        raise ConfigError(f"bad size line {lines[i]!r}", line=i + 1) from None
    if nrows != ncols:
        raise DimensionMismatch(f"{name}: matrix is {nrows}x{ncols}, operators must be square")
    if nrows < 1:
        raise ConfigError("matrix dimension must be positive", line=i + 1)

    want = {"pattern": 2, "complex": 4}.get(fld, 3)
    entries: dict[tuple[int, int], tuple[Fraction, Fraction]] = {}
    count = 0
    for lineno in range(i + 2, len(lines) + 1):
        line = lines[lineno - 1]
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        tok = line.split()
        if len(tok) != want:
            raise ConfigError(f"expected {want} fields, got {len(tok)}", line=lineno)
        try:
            r, c = int(tok[0]) - 1, int(tok[1]) - 1
        except ValueError:
            raise ConfigError(f"bad index in {line!r}", line=lineno) from None
        if not (0 <= r < nrows and 0 <= c < ncols):
            raise ConfigError(f"entry ({r + 1}, {c + 1}) outside {nrows}x{ncols}", line=lineno)
        if fld == "pattern":
            v = (Fraction(1), Fraction(0))
        elif fld == "complex":
            v = (_num(tok[2], lineno), _num(tok[3], lineno))
        else:
            v = (_num(tok[2], lineno), Fraction(0))
        if sym != "general" and c > r:
            raise ConfigError(f"{sym} files store the lower triangle only", line=lineno)
        if sym == "skew-symmetric" and r == c:
            raise ConfigError("skew-symmetric files have no diagonal entries", line=lineno)
        if sym == "hermitian" and r == c and v[1] != 0:
            raise ConfigError("hermitian diagonal entries must be real", line=lineno)
        _add(entries, (r, c), v)
        if r != c:
            if sym == "symmetric":
                _add(entries, (c, r), v)
            elif sym == "hermitian":
                _add(entries, (c, r), (v[0], -v[1]))
            elif sym == "skew-symmetric":
                _add(entries, (c, r), (-v[0], -v[1]))
        count += 1
    if count != nnz:
        raise ConfigError(f"size line declares {nnz} entries, found {count}", line=i + 1)
    return from_entries(nrows, entries, {"name": "matrix_market", "source": name, "symmetry": sym})


def _add(entries, key, v):
    cur = entries.get(key, (Fraction(0), Fraction(0)))
    entries[key] = (cur[0] + v[0], cur[1] + v[1])


def parse_matrix_market(path) -> SparseOperator:
    """Read a coordinate Matrix Market file into a :class:`SparseOperator`.

    Symmetric, skew-symmetric and Hermitian files are expanded to the full
    matrix.  Malformed content raises :class:`ConfigError` with ``line`` set.
    """
    p = Path(path)
    return read_matrix_market_text(p.read_text(), str(p))


def write_matrix_market(op: SparseOperator, path) -> None:
    """Write ``op`` as a general coordinate file (complex when any entry is)."""
    ex = sorted(op.exact_entries.items())
    cplx = not op.is_real
    lines = [f"%%MatrixMarket matrix coordinate {'complex' if cplx else 'real'} general",
             f"{op.dim} {op.dim} {len(ex)}"]
    for (r, c), (re, im) in ex:
        vals = [repr(float(re))] + ([repr(float(im))] if cplx else [])
        lines.append(" ".join([str(r + 1), str(c + 1), *vals]))
    Path(path).write_text("\n".join(lines) + "\n")
