"""Newton-Raphson iteration ``x <- x + alpha A^dagger (b - A x)`` on digital states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .decompose import decomposition_of
from .errors import DomainError, MaxIterationsExceeded, SingularOperator, ZeroMatrix
from .fixedpoint import DEFAULT_FORMAT, FixedPointFormat
from .operators import SparseOperator
from .spectral import (
    SpectralEstimate,
    dense_spectral_estimate,
    frobenius_alpha,
    DENSE_LIMIT,
    gershgorin_bounds,
)
from .state import DigitalState, _combine, convert_format, from_vector, norm_squared_exact, zero_state

__all__ = ["NRConfig", "NRResult", "iteration_count", "register_width", "solve", "DENSE_LIMIT"]


def iteration_count(contraction: float, eps: float) -> int:
    """A-priori iterate index ``r = ceil(ln(1/eps) / ln(1/contraction))``.

    The error of iterate ``x_r`` is at most ``contraction**(r+1) * |x*|``.
    """
    if not 0 <= contraction < 1:
        raise DomainError(f"contraction {contraction} must lie in [0, 1)")
    if eps <= 0:
        raise DomainError("eps must be positive")
    if contraction == 0 or eps >= 1:
        return 0
    return math.ceil(math.log(1 / eps) / math.log(1 / contraction))


def register_width(d: int, r: int, eps: float, kappa: float, norm_a: float, norm_b: float,
                   guard: int = 8) -> int:
    """Fraction bits ``ceil(log2(d r |A| / (kappa eps |b|))) + guard``, floored at ``guard``."""
    for name, v in (("d", d), ("eps", eps), ("kappa", kappa), ("norm_a", norm_a), ("norm_b", norm_b)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v}")
    if r < 0 or guard < 0:
        raise DomainError("r and guard must be non-negative")
    # exact ceiling of log2 of a rational-ish ratio; float log2 is off by ulps at powers of two
    ratio = Fraction(d) * max(r, 1) * Fraction(norm_a) / (Fraction(kappa) * Fraction(eps) * Fraction(norm_b))
    if ratio <= 1:
        return guard
    bits = ratio.numerator.bit_length() - ratio.denominator.bit_length()
    while Fraction(2) ** bits < ratio:
        bits += 1
    while bits > 0 and Fraction(2) ** (bits - 1) >= ratio:
        bits -= 1
    return bits + guard


@dataclass(frozen=True)
class NRConfig:
    """Solver settings.

    ``alpha_mode`` is ``"optimal"`` (needs spectral bounds), ``"frobenius-1"``,
    ``"frobenius-2"`` or an explicit positive number.  ``fmt`` may be a
    :class:`FixedPointFormat`, ``"auto"`` (fraction bits from
    :func:`register_width`) or ``None`` for the input state's format.
    """

    alpha_mode: object = "optimal"
    eps: float = 1e-6
    max_iterations: int = 100_000
    fmt: object = None
    guard_bits: int = 8
    residual_stop: bool = True
    shadow: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if isinstance(self.alpha_mode, (int, float)) and not self.alpha_mode > 0:
            raise DomainError("explicit alpha must be positive")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")


@dataclass(frozen=True)
class NRResult:
    solution: DigitalState
    iterations: int
    residual_history: tuple
    b_norm: float
    contraction_estimate: float
    fmt: FixedPointFormat
    alpha: float
    apriori_index: int | None
    contraction_bound: float | None
    converged: bool
    spectral: SpectralEstimate | None = None
    iterates: tuple = field(default=(), repr=False)

    @property
    def fractional_residual(self) -> float:
        return self.residual_history[-1] / self.b_norm

    @property
    def shadow_solution(self):
        return self.solution.shadow


def _norm(s: DigitalState) -> float:
    return math.sqrt(float(norm_squared_exact(s)))


def _estimate(A: SparseOperator) -> SpectralEstimate | None:
    if A.dim <= DENSE_LIMIT:
        return dense_spectral_estimate(A)
    if A.hermitian:
        return gershgorin_bounds(A)
    return None


def _alpha(A, cfg, est):
    mode = cfg.alpha_mode
    if isinstance(mode, (int, float)) and not isinstance(mode, bool):
        return float(mode)
    if mode == "optimal":
        if est is None or est.sigma_min_lower <= 0:
            return frobenius_alpha(A, 2)
        return est.alpha
    if mode == "frobenius-1":
        return frobenius_alpha(A, 1)
    if mode == "frobenius-2":
        return frobenius_alpha(A, 2)
    raise DomainError(f"unknown alpha mode {mode!r}")


def _contraction(alpha, est):
    if est is None or est.sigma_min_lower <= 0:
        return None
    return max(abs(1 - alpha * est.sigma_min_lower**2), abs(1 - alpha * est.sigma_max_upper**2))


def _auto_format(A, b_norm, b_inf, est, r, cfg) -> FixedPointFormat:
    smax = est.sigma_max_upper if est else 1.0
    smin = est.sigma_min_lower if est and est.sigma_min_lower > 0 else None
    kappa = smax / smin if smin else 1.0
    f = register_width(max(A.d, 1), r, cfg.eps, kappa, smax, b_norm, cfg.guard_bits)
    x_bound = b_norm / smin if smin else b_norm
    peak = max(1.0, b_inf, x_bound, smax * x_bound + b_norm, max(1.0, smax) ** 2)
    int_bits = math.ceil(math.log2(peak)) + 3
    return FixedPointFormat(max(f + int_bits, f + 2), f)


def solve(A: SparseOperator, b, cfg: NRConfig = NRConfig(), keep_iterates: bool = False) -> NRResult:
    """Solve ``A x = b`` without requiring ``A`` to be positive definite.

    Starting from ``x = 0`` every iteration performs two sparse products:
    ``res = b - A x`` and ``x <- x + alpha A^dagger res``.  Iteration stops
    after the a-priori count, or earlier once ``|res| <= eps |b|``.

    Raises
    ------
    SingularOperator
        When the bounds show ``A`` is singular, or the residual stops
        contracting.
    MaxIterationsExceeded
        When ``cfg.max_iterations`` runs out first.
    """
    est = _estimate(A)
    if est is not None and est.sigma_min_lower <= est.sigma_max_upper * 1e-14 * A.dim and est.source == "dense":
        raise SingularOperator(f"{A.describe()} is numerically singular (sigma_min={est.sigma_min_lower:.3g})")
    alpha = _alpha(A, cfg, est)
    c = _contraction(alpha, est)
    if c is not None and c >= 1:
        raise DomainError(f"alpha={alpha} does not contract (bound {c:.6g})")
    r_apriori = iteration_count(c, cfg.eps) if c is not None else None

    if isinstance(b, DigitalState):
        vec_b = b.values()
        b_state = b
    else:
        vec_b = np.asarray(b, dtype=complex)
        b_state = None
    b_norm = float(np.linalg.norm(vec_b))
    if b_norm == 0:
        raise ZeroMatrix("right-hand side is zero")
    if cfg.fmt == "auto":
        fmt = _auto_format(A, b_norm, float(np.max(np.abs(vec_b))), est, r_apriori or cfg.max_iterations, cfg)
    elif isinstance(cfg.fmt, FixedPointFormat):
        fmt = cfg.fmt
    else:
        fmt = b_state.fmt if b_state is not None else DEFAULT_FORMAT
    if b_state is None:
        b_state = from_vector(vec_b, fmt, shadow=cfg.shadow)
    else:
        b_state = convert_format(b_state, fmt)
        if cfg.shadow and b_state.shadow is None:
            b_state = replace(b_state, shadow=np.asarray(vec_b, dtype=complex))
    if A.dim > b_state.dim:
        raise DomainError(f"operator dimension {A.dim} exceeds state dimension {b_state.dim}")

    dec = decomposition_of(A)
    neg_a = dec.transformed(scale=-1)
    step = dec.transformed(scale=Fraction(alpha), adjoint=True)
    b_norm_fx = _norm(b_state)

    x = zero_state(b_state.n, fmt, shadow=b_state.shadow is not None)
    x = DigitalState(x.n, x.re, x.im, fmt, 0, b_state.logical_dim, x.shadow)
    res = b_state
    history = [b_norm_fx]
    iterates = []
    limit = cfg.max_iterations if r_apriori is None else min(cfg.max_iterations, r_apriori + 1)
    updates = 0
    converged = False
    while updates < limit:
        x = _combine(fmt, x.n, op=step, x=res, terms=[(1, x)])
        res = _combine(fmt, x.n, op=neg_a, x=x, terms=[(1, b_state)])
        updates += 1
        history.append(_norm(res))
        if keep_iterates:
            iterates.append(x)
        if history[-1] <= cfg.eps * b_norm_fx:
            converged = True
            if cfg.residual_stop:
                break
    est_c = _observed_contraction(history)
    if not converged:
        if r_apriori is None or updates < r_apriori + 1:
            if est_c >= 1 - 1e-12:
                raise SingularOperator(f"residual stagnated (observed contraction {est_c:.6g})")
            raise MaxIterationsExceeded(
                f"residual {history[-1] / b_norm_fx:.3g} above eps={cfg.eps} after {updates} iterations",
                history)
    return NRResult(x, updates, tuple(history), b_norm_fx, est_c, fmt, alpha, r_apriori, c,
                    converged, est, tuple(iterates))


def _observed_contraction(history) -> float:
    h = [v for v in history if v > 0]
    if len(h) < 2:
        return 0.0
    window = h[-min(len(h), 20):]
    if len(window) < 2 or window[0] == 0:
        return 0.0
    return (window[-1] / window[0]) ** (1 / (len(window) - 1))
