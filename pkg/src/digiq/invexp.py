"""Inverse of a positive definite operator as a weighted sum of exponentials.

With ``t = e^y`` the integral ``1/a = int_0^inf e^{-a t} dt`` becomes
``int e^{y - a e^y} dy``; the trapezoid rule on ``y = j h`` for
``j = p .. p'`` gives ``1/a`` to fractional accuracy ``eps`` for every ``a``
in ``[1/kappa, 1]``.  Replacing ``a`` by ``A`` turns each node into one
Chebyshev exponential.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .chebyshev import bessel_coeffs, clenshaw_apply, truncation_order
from .errors import DegenerateSpectrumBounds, DomainError, NotPositiveDefinite
from .fixedpoint import FixedPointFormat
from .operators import SparseOperator
from .spectral import SpectralEstimate, hermitian_estimate, rescale_affine
from .state import DigitalState, _combine, convert_format, from_vector, scale_state

__all__ = [
    "QuadratureGrid",
    "InverseResult",
    "discretization_params",
    "scalar_inverse_check",
    "inverse_apply",
]


@dataclass(frozen=True)
class QuadratureGrid:
    """Trapezoid nodes ``t_j = e^{jh}`` with weights ``h e^{jh}`` for ``j in [p, p']``.

    ``orders`` holds the Chebyshev order per node for an operator whose
    spectrum is bounded by ``bounds``; ``budgets`` the per-node truncation
    accuracy that produced it.
    """

    eps: float
    kappa: float
    n_disc: int
    h: float
    p: int
    p_prime: int
    bounds: tuple = (0.0, 1.0)
    orders: tuple = field(default=(), repr=False)
    budgets: tuple = field(default=(), repr=False)

    @property
    def size(self) -> int:
        return self.p_prime - self.p + 1

    @property
    def indices(self) -> range:
        return range(self.p, self.p_prime + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.exp(np.arange(self.p, self.p_prime + 1) * self.h)

    @property
    def weights(self) -> np.ndarray:
        return self.h * self.nodes

    @property
    def r_tot(self) -> int:
        return sum(self.orders)

    def order_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(self.orders).items()))


def _term_budget(eps: float, size: int, w: float, log_pref: float) -> float:
    # equal share of eps per term, in units of the term's prefactor; capped so
    # negligible far-tail terms do not overflow
    log_e0 = math.log(eps) - math.log(size) - math.log(w) - log_pref
    return math.exp(min(log_e0, 700.0))


def _orders(grid_args, lo: float, hi: float):
    eps, h, p, pp = grid_args
    size = pp - p + 1
    half, centre = (hi - lo) / 2, (hi + lo) / 2
    orders, budgets = [], []
    for j in range(p, pp + 1):
        t = math.exp(j * h)
        w = h * t
        e0 = _term_budget(eps, size, w, -centre * t)
        budgets.append(e0)
        orders.append(truncation_order(t * half, e0) if half > 0 else 0)
    return tuple(orders), tuple(budgets)


def discretization_params(eps: float, kappa: float, bounds=None) -> QuadratureGrid:
    """Trapezoid grid for fractional accuracy ``eps`` on ``a in [1/kappa, 1]``.

    ``n_disc = ceil(ln(24/eps)/2)``, ``h = 2 pi / (e^2 (2 n_disc + 1)^2)``,
    ``p = floor(-ln(3/eps)/h)``, ``p' = ceil(ln(kappa ln(3/eps))/h)``.
    Chebyshev orders are planned for spectral ``bounds`` (default
    ``(1/kappa, 1)``).
    """
    if not 0 < eps < 1:
        raise DomainError(f"eps={eps} not in (0, 1)")
    if not kappa >= 1:
        raise DomainError(f"kappa={kappa} must be >= 1")
    n_disc = math.ceil(0.5 * math.log(24 / eps))
    h = 2 * math.pi / (math.e**2 * (2 * n_disc + 1) ** 2)
    L = math.log(3 / eps)
    p = math.floor(-L / h)
    pp = math.ceil(math.log(kappa * L) / h)
    lo, hi = bounds if bounds is not None else (1 / kappa, 1.0)
    orders, budgets = _orders((eps, h, p, pp), lo, hi)
    return QuadratureGrid(eps, kappa, n_disc, h, p, pp, (lo, hi), orders, budgets)


def scalar_inverse_check(a: float, grid: QuadratureGrid) -> float:
    """``sum_j h e^{jh} exp(-a e^{jh})``, which approximates ``1/a``."""
    if not (1 / grid.kappa) * (1 - 1e-12) <= a <= 1 + 1e-12:
        raise DomainError(f"a={a} outside [1/kappa, 1] = [{1 / grid.kappa}, 1]")
    return math.fsum(grid.h * math.exp(j * grid.h) * math.exp(-a * math.exp(j * grid.h))
                     for j in grid.indices)


@dataclass(frozen=True)
class InverseResult:
    state: DigitalState
    grid: QuadratureGrid
    skipped_terms: int
    skipped_mass: float
    r_tot: int
    fmt: FixedPointFormat
    error_budget: float
    wall_time: float = field(default=0.0, compare=False)


def inverse_apply(A: SparseOperator, b, eps: float, kappa: float | None = None,
                  spectral: SpectralEstimate | None = None, fmt: FixedPointFormat | None = None,
                  return_info: bool = False):
    """``A^{-1} b`` as ``sum_j w_j e^{-A t_j} b`` for positive definite ``A``.

    The spectrum must lie in ``[1/kappa, 1]``; rescale beforehand otherwise.
    Each term's weight and spectral prefactor are folded into its Chebyshev
    coefficients, so all terms share one register format and accumulate in
    ascending ``j``.  Terms whose largest possible contribution
    ``w_j exp(-lambda_min t_j) |b|`` is below ``2**-f`` are skipped and their
    mass is added to the error budget.

    Raises
    ------
    NotPositiveDefinite
        If the spectral lower bound is not positive.
    """
    t0 = time.perf_counter()
    if not A.hermitian:
        raise NotPositiveDefinite(f"{A.describe()} is not Hermitian")
    est = spectral or hermitian_estimate(A)
    lo, hi = est.lambda_min_lower, est.lambda_max_upper
    if lo <= 0:
        raise NotPositiveDefinite(f"spectral lower bound {lo:.6g} is not positive")
    if hi > 1 + 1e-12:
        raise DomainError(f"spectral upper bound {hi:.6g} exceeds 1; rescale A first")
    if kappa is None:
        kappa = 1 / lo
    if lo < (1 / kappa) * (1 - 1e-12):
        raise DomainError(f"spectral lower bound {lo:.6g} below 1/kappa = {1 / kappa:.6g}")
    grid = discretization_params(eps, kappa, (lo, hi))
    size = grid.size

    b_vec = b.values() if isinstance(b, DigitalState) else np.asarray(b, dtype=complex)
    b_norm = float(np.linalg.norm(b_vec))
    try:
        A_hat, rec = rescale_affine(A, est, (-1, 1))
    except DegenerateSpectrumBounds:
        A_hat = rec = None

    # one coefficient table per node, with weight and prefactor folded in
    tables = []
    for j, r_j in zip(grid.indices, grid.orders):
        t = Fraction(math.exp(j * grid.h))
        w = grid.h * float(t)
        if rec is None:
            log_c = math.log(w) - lo * float(t)
            tables.append((j, None, log_c, w * math.exp(-lo * float(t))))
            continue
        t_hat = rec.scaled_time(t)
        co = bessel_coeffs(t_hat, r_j)
        lp = rec.log_prefactor(t)
        with mpmath.workprec(co.prec):
            log_c = mpmath.mpf(lp.numerator) / lp.denominator + mpmath.log(w)
        tables.append((j, co.scaled(log_c), log_c, w * math.exp(-lo * float(t))))

    if fmt is None:
        fmt = _common_format(tables, A.dim, b_norm, eps, size, kappa)
    s = convert_format(b, fmt) if isinstance(b, DigitalState) else from_vector(b_vec, fmt, shadow=True)
    cut = math.ldexp(1.0, -fmt.f)
    acc = None
    skipped, skipped_mass = 0, 0.0
    for j, co, log_c, reach in tables:
        if reach * max(b_norm, 1.0) < cut:
            skipped += 1
            skipped_mass += reach * b_norm
            continue
        if co is None:
            with mpmath.workprec(128):
                y = scale_state(s, mpmath.exp(log_c))
        else:
            y = clenshaw_apply(co, A_hat, s)
        acc = y if acc is None else _combine(fmt, s.n, terms=[(1, acc), (1, y)])
    if acc is None:
        acc = scale_state(s, 0)
    budget = 2 * eps + skipped_mass / max(b_norm, 1e-300)
    if return_info:
        return InverseResult(acc, grid, skipped, skipped_mass, grid.r_tot, fmt, budget,
                             time.perf_counter() - t0)
    return acc


def _common_format(tables, dim, b_norm, eps, size, kappa) -> FixedPointFormat:
    """Smallest format meeting every term's rounding budget and holding the sum."""
    # every term rounds at least once; keep the summed rounding well below eps
    f_need = math.ceil(math.log2(size * (math.isqrt(dim) + 2) / eps)) + 8
    int_bits = max(2, math.ceil(math.log2(kappa * max(b_norm, 1.0) + 1)) + 3)
    for _, co, log_c, _ in tables:
        if co is None:
            continue
        C = co.C
        with mpmath.workprec(co.prec):
            mag = mpmath.fsum(abs(c) * (k + 1) for k, c in enumerate(C)) * max(b_norm, 1.0)
            budget = mpmath.mpf(eps) / size
            need = mpmath.mpf((co.r + 1) ** 2) * (math.isqrt(dim) + 2) * max(mag, 1) / budget
            f_need = max(f_need, int(mpmath.ceil(mpmath.log(need, 2))) + 8)
            int_bits = max(int_bits, int(mpmath.ceil(mpmath.log(mag + 1, 2))) + 2)
    q = f_need + int_bits + 1
    if q > 128:
        raise DomainError(f"required register width {q} bits exceeds 128")
    return FixedPointFormat(q, f_need)
