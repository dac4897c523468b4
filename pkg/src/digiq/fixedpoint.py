"""Signed two's-complement fixed-point registers.

A register holds an integer ``raw`` and represents ``raw * 2**-f``.  Formats
with ``q_total <= 64`` store registers in ``int64`` arrays; wider formats
fall back to ``object`` arrays of Python integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import DomainError, RegisterOverflow

__all__ = [
    "FixedPointFormat",
    "FixedComplex",
    "PlaceValueDecomposition",
    "DEFAULT_FORMAT",
    "exact",
    "to_raw",
    "round_to_register",
    "raw_array",
    "place_value_square",
]


@dataclass(frozen=True)
class FixedPointFormat:
    """Register layout: ``q_total`` bits of which ``f`` are fraction bits."""

    q_total: int = 64
    f: int = 48

    def __post_init__(self):
        if not (2 <= self.f < self.q_total <= 128):
            raise DomainError(
                f"need 2 <= f < q_total <= 128, got q_total={self.q_total}, f={self.f}"
            )

    @property
    def wide(self) -> bool:
        return self.q_total > 64

    @property
    def dtype(self):
        return object if self.wide else np.int64

    @property
    def raw_min(self) -> int:
        return -(1 << (self.q_total - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.q_total - 1)) - 1

    @property
    def step(self) -> Fraction:
        return Fraction(1, 1 << self.f)

    @property
    def max_value(self) -> Fraction:
        return Fraction(self.raw_max, 1 << self.f)

    @property
    def min_value(self) -> Fraction:
        return Fraction(self.raw_min, 1 << self.f)

    @property
    def integer_bits(self) -> int:
        return self.q_total - self.f - 1

    def value(self, raw: int) -> Fraction:
        return Fraction(int(raw), 1 << self.f)

    def check_raw(self, raw: int, index=None) -> int:
        if raw < self.raw_min or raw > self.raw_max:
            where = "" if index is None else f" at index {index}"
            raise RegisterOverflow(
                f"value {Fraction(raw, 1 << self.f)} outside "
                f"[{self.min_value}, {self.max_value}]{where}",
                index=index,
            )
        return raw

    def __str__(self):
        return f"Q{self.q_total}.{self.f}"


DEFAULT_FORMAT = FixedPointFormat(64, 48)


def exact(x) -> Fraction:
    """Exact rational value of a real number (int, float, Fraction, mpf, numpy scalar)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise DomainError(f"non-finite value {x}")
        return Fraction(float(x))
    raw = getattr(x, "_mpf_", None)
    if raw is not None:  # mpmath.mpf: (sign, mantissa, exponent, bitcount)
        if not x.context.isfinite(x):
            raise DomainError(f"non-finite value {x}")
        sign, man, e, _ = raw
        man = -int(man) if sign else int(man)
        return Fraction(man << e) if e >= 0 else Fraction(man, 1 << -e)
    return Fraction(x)


def to_raw(x, fmt: FixedPointFormat, index=None) -> int:
    """Nearest register word for the real ``x``; ties go to even."""
    raw = round(exact(x) * (1 << fmt.f))
    return fmt.check_raw(raw, index)


def round_to_register(x, fmt: FixedPointFormat) -> Fraction:
    """Nearest representable value to ``x`` (exact rational)."""
    return fmt.value(to_raw(x, fmt))


def raw_array(values, fmt: FixedPointFormat) -> np.ndarray:
    """Round a real array to register words, vectorised for float input.

    Scaling a double by ``2**f`` is exact and ``rint`` rounds half to even,
    so the float path agrees with :func:`to_raw` bit for bit.
    """
    arr = np.asarray(values)
    if arr.dtype.kind in "fiu":
        arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise DomainError("non-finite value in register input")
        scaled = np.rint(np.ldexp(arr, fmt.f))
        lim_hi = math.ldexp(1.0, fmt.q_total - 1)
        bad = np.flatnonzero((scaled >= lim_hi) | (scaled < -lim_hi))
        if bad.size:
            i = int(bad[0])
            raise RegisterOverflow(
                f"value {arr.flat[i]!r} outside [{fmt.min_value}, {fmt.max_value}] at index {i}",
                index=i,
            )
        if fmt.wide:
            out = np.empty(arr.shape, dtype=object)
            out.flat[:] = [int(v) for v in scaled.flat]
            return out
        return scaled.astype(np.int64)
    out = np.empty(arr.shape, dtype=fmt.dtype)
    for i, v in enumerate(arr.flat):
        out.flat[i] = to_raw(v, fmt, index=i)
    return out


@dataclass(frozen=True)
class FixedComplex:
    """A complex register pair sharing one format."""

    re_raw: int
    im_raw: int
    fmt: FixedPointFormat

    @classmethod
    def from_value(cls, z, fmt: FixedPointFormat) -> "FixedComplex":
        if isinstance(z, tuple):
            re, im = z
        else:
            z = complex(z) if not isinstance(z, (Fraction, int)) else z
            re, im = (z.real, z.imag) if isinstance(z, complex) else (z, 0)
        return cls(to_raw(re, fmt), to_raw(im, fmt), fmt)

    @property
    def re(self) -> Fraction:
        return self.fmt.value(self.re_raw)

    @property
    def im(self) -> Fraction:
        return self.fmt.value(self.im_raw)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __eq__(self, other):
        if isinstance(other, FixedComplex):
            return (self.re, self.im) == (other.re, other.im)
        if isinstance(other, (int, float, complex, Fraction)):
            other = complex(other) if not isinstance(other, Fraction) else other
            if isinstance(other, complex):
                return self.re == exact(other.real) and self.im == exact(other.imag)
            return self.re == other and self.im == 0
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))


@dataclass(frozen=True)
class PlaceValueDecomposition:
    """Bit weights that rebuild a register value from its two's-complement bits.

    Bits are listed most significant first.  The sign bit carries weight
    ``-2**(q_total-f-1)``; bit ``k`` below it carries ``2**(q_total-f-2-k)``,
    down to ``2**-f`` for the last bit.
    """

    fmt: FixedPointFormat

    @property
    def weights(self) -> list[Fraction]:
        q, f = self.fmt.q_total, self.fmt.f
        top = q - f - 1
        w = [Fraction(-(2**top)) if top >= 0 else -Fraction(1, 2 ** (-top))]
        for k in range(1, q):
            e = top - k
            w.append(Fraction(2**e) if e >= 0 else Fraction(1, 2 ** (-e)))
        return w

    @property
    def raw_weights(self) -> list[int]:
        """Weights in units of ``2**-f`` (integers)."""
        q = self.fmt.q_total
        return [-(1 << (q - 1))] + [1 << (q - 1 - k) for k in range(1, q)]

    def bits(self, raw: int) -> list[int]:
        q = self.fmt.q_total
        u = int(raw) & ((1 << q) - 1)
        return [(u >> (q - 1 - k)) & 1 for k in range(q)]

    def reconstruct(self, bits) -> Fraction:
        return sum((w for w, b in zip(self.weights, bits) if b), Fraction(0))

    def reconstruct_raw(self, bits) -> int:
        return sum(w for w, b in zip(self.raw_weights, bits) if b)


def place_value_square(raws, fmt: FixedPointFormat) -> int:
    """Sum of squared register words via the q*q weighted bit-pair projectors.

    Each pair of bit positions ``(k, l)`` contributes ``w_k w_l`` times the
    number of registers in which both bits are set.  The result equals
    ``sum(raw**2)`` exactly; this is the deterministic bit-by-bit readout
    used to cross-check the direct accumulation.
    """
    pv = PlaceValueDecomposition(fmt)
    w = pv.raw_weights
    q = fmt.q_total
    raws = [int(r) for r in np.asarray(raws, dtype=object).ravel()]
    if not raws:
        return 0
    bits = np.array([pv.bits(r) for r in raws], dtype=np.int64).reshape(len(raws), q)
    counts = bits.T @ bits  # counts[k, l] = #registers with bits k and l both set
    total = 0
    for k in range(q):
        row = counts[k]
        for l in range(q):
            c = int(row[l])
            if c:
                total += w[k] * w[l] * c
    return total
