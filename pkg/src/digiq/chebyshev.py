"""Action of ``e^{-A t}`` through a truncated Chebyshev/Bessel expansion.

For a spectrum in ``[-1, 1]``

    e^{-A t} = I_0(t) + 2 sum_k (-1)^k I_k(t) T_k(A),

with ``I_k`` the modified Bessel functions.  Coefficients come from Miller's
descending recursion in multiprecision; the truncated series is summed with
Clenshaw's recursion, one sparse product per order.

Miller's recursion is normalised with ``I_0 + 2 sum_{k>=1} I_k = e^t``
(the generating function at ``theta = 0``); the even-index sum alone gives
``cosh t``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .decompose import Decomposition, TransformedOperator, decomposition_of
from .errors import DegenerateSpectrumBounds, DimensionMismatch, DomainError
from .fixedpoint import FixedPointFormat
from .operators import SparseOperator
from .spectral import AffineRecord, SpectralEstimate, gershgorin_bounds, rescale_affine
from .state import DigitalState, _combine, convert_format, from_vector, norm_squared_exact, scale_state

__all__ = [
    "ChebCoefficients",
    "ExpmJob",
    "ExpmResult",
    "truncation_order",
    "tail_bound_analytic",
    "bessel_series",
    "bessel_coeffs",
    "miller_start",
    "clenshaw_apply",
    "chebyshev_forward",
    "expm_apply",
    "auto_format",
]

_E54 = math.exp(1.25)


def tail_bound_analytic(t: float, r: int) -> float:
    """Upper bound ``4 (t/2)^{r+1} / (r+1)! * exp(t^2 / (4 (r+2)))`` on ``sum_{k>r} 2 I_k(t)``."""
    if t == 0:
        return 0.0
    lg = math.log(4) + (r + 1) * math.log(t / 2) - math.lgamma(r + 2) + t * t / (4 * (r + 2))
    return math.exp(lg) if lg < 700 else math.inf


def truncation_order(t: float, eps0: float) -> int:
    """Order ``r = ceil(e^{5/4} t / 2 + ln(1/eps0))``, at least ``ceil(t) - 2``.

    If the analytic tail bound at that order still exceeds ``eps0`` the order
    is raised until it does not.
    """
    t = float(t)
    if t < 0 or math.isnan(t):
        raise DomainError(f"t={t} must be non-negative")
    if not eps0 > 0:
        raise DomainError(f"eps0={eps0} must be positive")
    r = max(0, math.ceil(_E54 * t / 2 + math.log(1 / eps0)), math.ceil(t) - 2)
    while tail_bound_analytic(t, r) >= eps0:
        r += 1
    return r


def bessel_series(k: int, t, prec: int = 128):
    """``I_k(t)`` by direct summation of ``sum_s (t/2)^{k+2s} / (s! (k+s)!)``.

    Runs at ``2 * prec`` bits and stops once terms fall below ``2**-(2 * prec)``
    relative to the running sum.
    """
    with mpmath.workprec(2 * prec):
        x = mpmath.mpf(t) / 2
        if x == 0:
            return mpmath.mpf(1) if k == 0 else mpmath.mpf(0)
        term = x**k / mpmath.factorial(k)
        total = term
        x2 = x * x
        s = 0
        cut = mpmath.ldexp(1, -2 * prec)
        while True:
            s += 1
            term = term * x2 / (s * (k + s))
            total += term
            if term < cut * total and s > x:
                break
        return +total


def miller_start(t: float, r: int) -> int:
    """Start index ``r + ceil(15 + t/2)`` for the descending recursion."""
    return r + math.ceil(15 + float(t) / 2)


@dataclass(frozen=True)
class ChebCoefficients:
    """Truncated expansion ``sum_{k<=r} C_k T_k`` times ``exp(log_scale)``.

    ``I`` holds ``I_0(t) .. I_r(t)`` in multiprecision.  ``tail_bound``
    bounds ``sum_{k>r} 2 I_k(t)`` before scaling.
    """

    t: object
    r: int
    I: tuple
    tail_bound: object
    log_scale: object = 0
    start: int = 0
    prec: int = 128

    @property
    def C(self) -> tuple:
        with mpmath.workprec(self.prec):
            s = mpmath.exp(self.log_scale)
            return tuple((self.I[0] if k == 0 else 2 * (-1) ** k * self.I[k]) * s for k in range(self.r + 1))

    def scaled(self, log_factor) -> "ChebCoefficients":
        with mpmath.workprec(self.prec):
            return ChebCoefficients(self.t, self.r, self.I, self.tail_bound,
                                    mpmath.mpf(self.log_scale) + mpmath.mpf(log_factor), self.start, self.prec)

    @property
    def scaled_tail(self) -> float:
        with mpmath.workprec(self.prec):
            return float(self.tail_bound * mpmath.exp(self.log_scale))

    def floats(self) -> np.ndarray:
        return np.array([float(c) for c in self.C])


def bessel_coeffs(t, r: int, precision: int | None = None) -> ChebCoefficients:
    """Coefficients for ``e^{-A t}`` up to order ``r`` via Miller's recursion.

    ``I_{k-1} = (2k/t) I_k + I_{k+1}`` runs down from the start index with
    seeds ``(1, 0)`` and is rescaled so that ``I_0 + 2 sum_{k>=1} I_k = e^t``.
    """
    tf = float(t)
    if tf < 0 or math.isnan(tf):
        raise DomainError(f"t={t} must be non-negative")
    if r < 0:
        raise DomainError("order must be non-negative")
    prec = precision or 128
    # carry enough bits for the dynamic range e^t as well
    prec = prec + int(tf / math.log(2)) + 16
    with mpmath.workprec(prec):
        tm = mpmath.mpf(t) if not isinstance(t, Fraction) else mpmath.mpf(t.numerator) / t.denominator
        if tm == 0:
            vals = tuple(mpmath.mpf(1) if k == 0 else mpmath.mpf(0) for k in range(r + 1))
            return ChebCoefficients(tm, r, vals, mpmath.mpf(0), 0, r, prec)
        l = miller_start(tf, r)
        seq = [mpmath.mpf(0)] * (l + 2)
        seq[l] = mpmath.mpf(1)
        for k in range(l, 0, -1):
            seq[k - 1] = (2 * k / tm) * seq[k] + seq[k + 1]
        norm = seq[0] + 2 * mpmath.fsum(seq[1:l + 1])
        factor = mpmath.exp(tm) / norm
        vals = [v * factor for v in seq[: l + 1]]
        tail = 2 * mpmath.fsum(vals[r + 1:]) + mpmath.mpf(tail_bound_analytic(tf, l))
        return ChebCoefficients(tm, r, tuple(vals[: r + 1]), tail, 0, l, prec)


def _doubled(A) -> TransformedOperator:
    if isinstance(A, SparseOperator):
        A = decomposition_of(A)
    if isinstance(A, Decomposition):
        return A.transformed(scale=2)
    if isinstance(A, TransformedOperator):
        return TransformedOperator(A.base, 2 * A.scale, A.shift, A.adjoint)
    raise DomainError(f"cannot apply {type(A).__name__}")


def _single(A):
    if isinstance(A, SparseOperator):
        return decomposition_of(A)
    return A


def clenshaw_apply(coeffs: ChebCoefficients, A_rescaled, b: DigitalState) -> DigitalState:
    """``sum_{k=0}^{r} C_k T_k(A) b`` by Clenshaw's backward recursion.

    ``y_k = C_k b + 2 A y_{k+1} - y_{k+2}`` from ``k = r`` down to 1, then
    ``C_0 b + A y_1 - y_2``; ``r`` sparse products in total, each step
    rounded once per amplitude.
    """
    C = coeffs.C
    r = coeffs.r
    A1 = _single(A_rescaled)
    if A1.dim > b.dim:
        raise DimensionMismatch(f"operator dimension {A1.dim} exceeds state dimension {b.dim}")
    fmt, n = b.fmt, b.n
    if r == 0:
        return _combine(fmt, n, terms=[(C[0], b)])
    A2 = _doubled(A_rescaled)
    y2 = None
    y1 = _combine(fmt, n, terms=[(C[r], b)])
    for k in range(r - 1, 0, -1):
        terms = [(C[k], b)]
        if y2 is not None:
            terms.append((-1, y2))
        y1, y2 = _combine(fmt, n, op=A2, x=y1, terms=terms), y1
    terms = [(C[0], b)]
    if y2 is not None:
        terms.append((-1, y2))
    return _combine(fmt, n, op=A1, x=y1, terms=terms)


def chebyshev_forward(coeffs, A_dense: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reference sum via the forward recurrence ``T_{k+1} = 2 A T_k - T_{k-1}`` (double precision)."""
    C = coeffs.floats() if isinstance(coeffs, ChebCoefficients) else np.asarray(coeffs, dtype=float)
    b = np.asarray(b, dtype=complex)
    t_prev, t_cur = b, A_dense @ b
    out = C[0] * t_prev
    if len(C) > 1:
        out = out + C[1] * t_cur
    for k in range(2, len(C)):
        t_prev, t_cur = t_cur, 2 * (A_dense @ t_cur) - t_prev
        out = out + C[k] * t_cur
    return out


@dataclass(frozen=True)
class ExpmJob:
    """``e^{-A t} b`` to absolute accuracy ``eps0`` (times the spectral prefactor).

    ``fmt`` is a :class:`FixedPointFormat` or ``"auto"``.  ``log_scale`` is an
    extra scalar factor ``exp(log_scale)`` folded into the coefficients, for
    example ``lambda t`` to evolve with ``A - lambda I``.
    """

    op: SparseOperator
    t: float
    eps0: float = 1e-8
    spectral: SpectralEstimate | None = None
    fmt: object = "auto"
    guard_bits: int = 8
    log_scale: float = 0.0

    def __post_init__(self):
        if float(self.t) < 0:
            raise DomainError("time must be non-negative")
        if not self.eps0 > 0:
            raise DomainError("eps0 must be positive")


@dataclass(frozen=True)
class ExpmResult:
    state: DigitalState
    r: int
    t_scaled: float
    tail_bound: float
    log_prefactor: float
    fmt: FixedPointFormat
    record: AffineRecord | None
    products: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def prefactor(self) -> float:
        return math.exp(self.log_prefactor)


def auto_format(coeffs: ChebCoefficients, dim: int, b_norm: float, eps0: float, log_prefactor,
                guard: int = 8) -> FixedPointFormat:
    """Register format holding every Clenshaw intermediate with rounding below ``eps0 * prefactor``.

    Intermediates obey ``|y_k| <= M = sum_j |C_j| (j + 1) |b|``.  Rounding
    errors pass through Chebyshev polynomials of the second kind, which grow
    at most linearly in the order, and rounding the rescaled operator's
    entries perturbs the result in proportion to ``M``; both are covered by
    ``(r + 1)^2 (sqrt(N) + 2) M`` units of ``2**-f``.
    """
    C = coeffs.C
    r = coeffs.r
    with mpmath.workprec(coeffs.prec):
        mag = mpmath.fsum(abs(c) * (k + 1) for k, c in enumerate(C)) * max(b_norm, 1.0)
        int_bits = int(mpmath.ceil(mpmath.log(mag + 1, 2))) + 2
        budget = mpmath.mpf(eps0) * mpmath.exp(log_prefactor)
        need = mpmath.mpf((r + 1) ** 2) * (math.isqrt(dim) + 2) * max(mag, 1) / budget
        f = max(int(mpmath.ceil(mpmath.log(need, 2))) + guard, 8)
    q = f + int_bits + 1
    if q > 128:
        raise DomainError(f"required register width {q} bits exceeds 128; split the evolution time")
    return FixedPointFormat(max(q, f + 2), f)


def _prepare_b(b, fmt):
    if isinstance(b, DigitalState):
        return convert_format(b, fmt)
    return from_vector(np.asarray(b, dtype=complex), fmt, shadow=True)


def expm_apply(job: ExpmJob, b, return_info: bool = False):
    """``e^{-A t} b`` via rescaling to ``[-1, 1]``, Bessel coefficients and Clenshaw.

    The scalar prefactor ``exp(-t (lambda_max + lambda_min) / 2)`` is folded
    into the coefficients before they are rounded, so no separate lossy
    multiply is needed.  Scalar operators (coinciding spectral bounds) are
    handled as a plain scalar exponential.
    """
    t0 = time.perf_counter()
    A = job.op
    est = job.spectral or gershgorin_bounds(A)
    t = Fraction(job.t)
    b_vec = b.values() if isinstance(b, DigitalState) else np.asarray(b, dtype=complex)
    b_norm = float(np.linalg.norm(b_vec))

    def finish(state, r, ts, tail, logp, fmt, rec, products):
        res = ExpmResult(state, r, float(ts), float(tail), float(logp), fmt, rec, products,
                         time.perf_counter() - t0)
        return res if return_info else state

    if t == 0:
        fmt = job.fmt if isinstance(job.fmt, FixedPointFormat) else (
            b.fmt if isinstance(b, DigitalState) else FixedPointFormat())
        return finish(_prepare_b(b, fmt), 0, 0, 0, 0, fmt, None, 0)
    try:
        A_hat, rec = rescale_affine(A, est, (-1, 1))
    except DegenerateSpectrumBounds as exc:
        c = Fraction(exc.value)
        with mpmath.workprec(256):
            logp = -c * t + Fraction(job.log_scale)
            factor = mpmath.exp(mpmath.mpf(logp.numerator) / logp.denominator)
        fmt = job.fmt if isinstance(job.fmt, FixedPointFormat) else _scalar_format(factor, b_norm, job)
        s = _prepare_b(b, fmt)
        return finish(scale_state(s, factor), 0, 0, 0, float(logp), fmt, None, 0)

    t_hat = rec.scaled_time(t)
    log_pref = rec.log_prefactor(t)
    r = truncation_order(float(t_hat), job.eps0)
    coeffs = bessel_coeffs(t_hat, r)
    with mpmath.workprec(coeffs.prec):
        lp = mpmath.mpf(log_pref.numerator) / log_pref.denominator + mpmath.mpf(job.log_scale)
    coeffs = coeffs.scaled(lp)
    if isinstance(job.fmt, FixedPointFormat):
        fmt = job.fmt
    else:
        fmt = auto_format(coeffs, A.dim, b_norm, job.eps0, lp, job.guard_bits)
    s = _prepare_b(b, fmt)
    out = clenshaw_apply(coeffs, A_hat, s)
    return finish(out, r, t_hat, coeffs.scaled_tail, float(lp), fmt, rec, r)


def _scalar_format(factor, b_norm, job) -> FixedPointFormat:
    mag = float(factor) * max(b_norm, 1.0)
    int_bits = max(2, math.ceil(math.log2(mag + 1)) + 2)
    f = max(48, math.ceil(math.log2(1 / (job.eps0 * max(float(factor), 1e-300)))) + job.guard_bits)
    f = min(f, 126 - int_bits)
    return FixedPointFormat(f + int_bits + 1, f)
