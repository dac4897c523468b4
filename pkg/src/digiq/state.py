"""Digital quantum states: one fixed-point complex register per basis index.

Every state operation computes its result exactly and rounds once per
amplitude.  A state may optionally carry a double-precision *shadow*, which
is pushed through the same operations in floating point so round-off can be
measured against it.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import DimensionMismatch, DomainError, IndexOutOfRange
from .fixedpoint import (
    DEFAULT_FORMAT,
    FixedComplex,
    FixedPointFormat,
    exact,
    raw_array,
    to_raw,
)

__all__ = [
    "DigitalState",
    "init_state",
    "from_vector",
    "zero_state",
    "basis_state",
    "scale_state",
    "shift_state",
    "add_states",
    "linear_combination",
    "readout",
    "norm_squared",
    "norm_squared_exact",
    "convert_format",
    "scalar_raw",
    "dump_binary",
    "load_binary",
    "export_csv",
    "load_csv",
]


def _freeze(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DigitalState:
    """Index register of ``n`` bits entangled with 2**n complex registers.

    No normalisation is imposed on the register values.
    """

    n: int
    re: np.ndarray
    im: np.ndarray
    fmt: FixedPointFormat = DEFAULT_FORMAT
    product_count: int = 0
    logical_dim: int | None = None
    shadow: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        N = 1 << self.n
        if self.re.shape != (N,) or self.im.shape != (N,):
            raise DimensionMismatch(f"expected {N} registers, got {self.re.shape}")
        if self.product_count < 0:
            raise DomainError("product_count must be non-negative")
        if self.logical_dim is None:
            object.__setattr__(self, "logical_dim", N)
        _freeze(self.re)
        _freeze(self.im)
        if self.shadow is not None:
            _freeze(self.shadow)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def values(self) -> np.ndarray:
        """Register values as complex doubles."""
        scale = math.ldexp(1.0, -self.fmt.f)
        if self.fmt.wide:
            re = np.array([float(Fraction(int(v), 1 << self.fmt.f)) for v in self.re])
            im = np.array([float(Fraction(int(v), 1 << self.fmt.f)) for v in self.im])
            return re + 1j * im
        return (self.re.astype(np.float64) + 1j * self.im.astype(np.float64)) * scale

    def register(self, j: int) -> FixedComplex:
        _check_index(self, j)
        return FixedComplex(int(self.re[j]), int(self.im[j]), self.fmt)

    def same_bits(self, other: "DigitalState") -> bool:
        return (
            self.fmt == other.fmt
            and self.n == other.n
            and np.array_equal(self.re, other.re)
            and np.array_equal(self.im, other.im)
        )

    def __len__(self):
        return self.dim


def _check_index(s, j):
    if not 0 <= j < s.dim:
        raise IndexOutOfRange(f"index {j} outside [0, {s.dim})")


def _n_for(dim: int) -> int:
    return max(0, (int(dim) - 1).bit_length())


def _make(n, re, im, fmt, product_count=0, logical_dim=None, shadow=None):
    return DigitalState(n, re, im, fmt, product_count, logical_dim, shadow)


def from_vector(vec, fmt: FixedPointFormat = DEFAULT_FORMAT, shadow: bool = False) -> DigitalState:
    """Round a complex vector into registers, zero-padding to a power of two."""
    vec = np.asarray(vec)
    dim = vec.shape[0]
    n = _n_for(dim)
    N = 1 << n
    if np.iscomplexobj(vec) or vec.dtype.kind in "fiu":
        v = np.zeros(N, dtype=np.complex128)
        v[:dim] = vec
        re, im = raw_array(v.real, fmt), raw_array(v.imag, fmt)
        sh = v if shadow else None
    else:  # exact scalars (Fraction, mpf, tuples)
        re = np.zeros(N, dtype=fmt.dtype)
        im = np.zeros(N, dtype=fmt.dtype)
        for j, z in enumerate(vec):
            re[j], im[j] = scalar_raw(z, fmt, index=j)
        sh = np.array([complex(*_scalar_float(z)) for z in vec] + [0j] * (N - dim)) if shadow else None
    return _make(n, re, im, fmt, 0, dim, sh)


def init_state(oracle, n: int, fmt: FixedPointFormat = DEFAULT_FORMAT,
               logical_dim: int | None = None, shadow: bool = False) -> DigitalState:
    """Load ``oracle(j)`` into register ``j`` for every ``j < logical_dim``.

    Indices at or beyond ``logical_dim`` are zero.
    """
    N = 1 << n
    dim = N if logical_dim is None else int(logical_dim)
    if not 0 < dim <= N:
        raise DomainError(f"logical dimension {dim} not in (0, {N}]")
    vals = [oracle(j) for j in range(dim)]
    if all(isinstance(v, (int, float, complex, np.number)) for v in vals):
        arr = np.zeros(N, dtype=np.complex128)
        arr[:dim] = vals
        s = from_vector(arr, fmt, shadow)
    else:
        arr = np.empty(N, dtype=object)
        arr[:] = [0] * N
        for j, v in enumerate(vals):
            arr[j] = v
        s = from_vector(arr, fmt, shadow)
    return replace(s, logical_dim=dim)


def zero_state(n: int, fmt: FixedPointFormat = DEFAULT_FORMAT, shadow: bool = False) -> DigitalState:
    N = 1 << n
    return _make(n, np.zeros(N, dtype=fmt.dtype), np.zeros(N, dtype=fmt.dtype), fmt,
                 shadow=np.zeros(N, dtype=np.complex128) if shadow else None)


def basis_state(n: int, j: int, fmt: FixedPointFormat = DEFAULT_FORMAT, shadow: bool = False) -> DigitalState:
    vec = np.zeros(1 << n)
    vec[j] = 1.0
    return from_vector(vec, fmt, shadow)


def _scalar_parts(c):
    if isinstance(c, tuple):
        return c
    if isinstance(c, (complex, np.complexfloating)):
        return c.real, c.imag
    if hasattr(c, "imag") and hasattr(c, "real") and not isinstance(c, (int, float, Fraction, np.number)):
        return c.real, c.imag  # mpmath.mpc
    return c, 0


def scalar_raw(c, fmt: FixedPointFormat, index=None) -> tuple[int, int]:
    """Raw register words of a (complex) scalar."""
    re, im = _scalar_parts(c)
    return to_raw(re, fmt, index), to_raw(im, fmt, index)


def _scalar_float(c) -> tuple[float, float]:
    re, im = _scalar_parts(c)
    return float(exact(re)), float(exact(im))


def _combine(fmt, n, op=None, x=None, terms=(), logical_dim=None) -> DigitalState:
    """Round ``op @ x + sum(c * v for c, v in terms)`` once into ``fmt``."""
    for _, v in terms:
        if v.n != n:
            raise DimensionMismatch(f"state has n={v.n}, expected {n}")
        if v.fmt != fmt:
            raise DimensionMismatch(f"state format {v.fmt} differs from {fmt}")
    raw_terms = []
    for c, v in terms:
        cr, ci = scalar_raw(c, fmt)
        raw_terms.append((cr, ci, v.re, v.im))
    N = 1 << n
    blocks = None
    counts = [v.product_count for _, v in terms]
    inputs = [v for _, v in terms]
    if op is not None:
        if x.n != n or x.fmt != fmt:
            raise DimensionMismatch("operator input state does not match")
        if op.dim > N:
            raise DimensionMismatch(f"operator dimension {op.dim} exceeds {N}")
        blocks = op.block_arrays(fmt)
        counts.append(x.product_count + 1)
        inputs.append(x)
    re, im = kernels.combine(fmt, N, blocks, None if x is None else (x.re, x.im), raw_terms)
    shadow = None
    if inputs and all(s.shadow is not None for s in inputs):
        shadow = np.zeros(N, dtype=np.complex128)
        if op is not None:
            shadow[: op.dim] += op.csr @ x.shadow[: op.dim]
        for c, v in terms:
            shadow += complex(*_scalar_float(c)) * v.shadow
    if logical_dim is None:
        logical_dim = max((s.logical_dim for s in inputs), default=N)
    return _make(n, re, im, fmt, max(counts, default=0), logical_dim, shadow)


def linear_combination(terms, fmt: FixedPointFormat | None = None) -> DigitalState:
    """``sum(c * s for c, s in terms)`` with a single rounding per amplitude."""
    terms = list(terms)
    if not terms:
        raise DomainError("empty linear combination")
    s0 = terms[0][1]
    return _combine(fmt or s0.fmt, s0.n, terms=terms)


def scale_state(s: DigitalState, c) -> DigitalState:
    return _combine(s.fmt, s.n, terms=[(c, s)])


def _shift_raw(v: int, k: int) -> int:
    if k >= 0:
        return v << k
    q, r = divmod(v, 1 << -k)
    half = 1 << (-k - 1)
    if r > half or (r == half and q & 1):
        q += 1
    return q


def shift_state(s: DigitalState, k: int) -> DigitalState:
    """Multiply by ``2**k`` on the raw words (exact for ``k >= 0``, half-even otherwise)."""
    fmt = s.fmt
    re = [fmt.check_raw(_shift_raw(int(v), k), j) for j, v in enumerate(s.re)]
    im = [fmt.check_raw(_shift_raw(int(v), k), j) for j, v in enumerate(s.im)]
    shadow = None if s.shadow is None else s.shadow * 2.0**k
    return _make(s.n, np.array(re, dtype=fmt.dtype), np.array(im, dtype=fmt.dtype), fmt,
                 s.product_count, s.logical_dim, shadow)


def add_states(a: DigitalState, b: DigitalState) -> DigitalState:
    if a.n != b.n:
        raise DimensionMismatch(f"n={a.n} vs n={b.n}")
    if a.fmt != b.fmt:
        raise DimensionMismatch(f"format {a.fmt} vs {b.fmt}")
    return _combine(a.fmt, a.n, terms=[(1, a), (1, b)])


def readout(s: DigitalState, j: int) -> complex:
    """Register value at index ``j``."""
    return complex(s.register(j))


def norm_squared_exact(s: DigitalState) -> Fraction:
    mask = np.zeros(s.dim, dtype=np.uint8)
    total = kernels.masked_sumsq(s.re, s.im, mask, 0)
    return Fraction(total, 1 << (2 * s.fmt.f))


def norm_squared(s: DigitalState) -> float:
    """Sum of squared magnitudes over all registers.

    This is an O(N) sweep over the index register; fine classically, but
    not something the superposed procedure can do efficiently.
    """
    return float(norm_squared_exact(s))


def convert_format(s: DigitalState, fmt: FixedPointFormat) -> DigitalState:
    """Re-express registers in another format (exact when ``fmt.f >= s.fmt.f``)."""
    if fmt == s.fmt:
        return s
    shift = fmt.f - s.fmt.f
    re = np.empty(s.dim, dtype=fmt.dtype)
    im = np.empty(s.dim, dtype=fmt.dtype)
    for j in range(s.dim):
        for src, dst in ((s.re, re), (s.im, im)):
            v = int(src[j])
            if shift >= 0:
                w = v << shift
            else:
                w = round(Fraction(v, 1 << -shift))
            dst[j] = fmt.check_raw(w, j)
    return _make(s.n, re, im, fmt, s.product_count, s.logical_dim, s.shadow)


# --- persistence -----------------------------------------------------------

_HEADER = struct.Struct("<III")


def _word_bytes(fmt):
    return 8 * ((fmt.q_total + 63) // 64)


def dump_binary(s: DigitalState) -> bytes:
    """Header ``(n, q_total, f)`` as little-endian uint32, then re/im words per index.

    Words are little-endian two's-complement integers of 8 bytes for
    ``q_total <= 64`` and 16 bytes otherwise.
    """
    wb = _word_bytes(s.fmt)
    out = io.BytesIO()
    out.write(_HEADER.pack(s.n, s.fmt.q_total, s.fmt.f))
    if wb == 8:
        words = np.empty(2 * s.dim, dtype="<i8")
        words[0::2] = s.re
        words[1::2] = s.im
        out.write(words.tobytes())
    else:
        for j in range(s.dim):
            out.write(int(s.re[j]).to_bytes(wb, "little", signed=True))
            out.write(int(s.im[j]).to_bytes(wb, "little", signed=True))
    return out.getvalue()


def load_binary(data: bytes) -> DigitalState:
    if len(data) < _HEADER.size:
        raise DomainError("truncated state header")
    n, q_total, f = _HEADER.unpack_from(data)
    fmt = FixedPointFormat(q_total, f)
    wb = _word_bytes(fmt)
    N = 1 << n
    body = data[_HEADER.size:]
    if len(body) != 2 * N * wb:
        raise DomainError(f"expected {2 * N * wb} payload bytes, got {len(body)}")
    if wb == 8:
        words = np.frombuffer(body, dtype="<i8").astype(np.int64)
        re, im = words[0::2].copy(), words[1::2].copy()
    else:
        re = np.empty(N, dtype=object)
        im = np.empty(N, dtype=object)
        for j in range(N):
            base = 2 * j * wb
            re[j] = int.from_bytes(body[base:base + wb], "little", signed=True)
            im[j] = int.from_bytes(body[base + wb:base + 2 * wb], "little", signed=True)
    for j in range(N):
        fmt.check_raw(int(re[j]), j)
        fmt.check_raw(int(im[j]), j)
    return _make(n, re, im, fmt)


def _exact_decimal(raw: int, f: int) -> str:
    # raw * 2**-f == raw * 5**f / 10**f, which has a finite decimal expansion
    return str(Decimal(int(raw) * 5**f).scaleb(-f).normalize()) if raw else "0"


def export_csv(s: DigitalState) -> str:
    """CSV with columns ``index,re,im`` holding exact decimal register values."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "re", "im"])
    for j in range(s.dim):
        w.writerow([j, _exact_decimal(int(s.re[j]), s.fmt.f), _exact_decimal(int(s.im[j]), s.fmt.f)])
    return buf.getvalue()


def load_csv(text: str, fmt: FixedPointFormat = DEFAULT_FORMAT) -> DigitalState:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["index", "re", "im"]:
        raise DomainError("CSV state must start with header index,re,im")
    entries = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            j = int(row[0])
            entries[j] = (Fraction(Decimal(row[1])), Fraction(Decimal(row[2])))
        except (ValueError, IndexError, ArithmeticError) as exc:
            raise DomainError(f"bad CSV state row at line {lineno}: {row}") from exc
    dim = max(entries) + 1 if entries else 1
    vals = np.empty(dim, dtype=object)
    for j in range(dim):
        vals[j] = entries.get(j, (Fraction(0), Fraction(0)))
    return from_vector(vals, fmt)
