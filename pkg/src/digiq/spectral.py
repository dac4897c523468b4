"""Spectral bounds, convergence scales and affine spectrum rescaling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateSpectrumBounds, DomainError, NotHermitian, ZeroMatrix
from .operators import SparseOperator

__all__ = [
    "SpectralEstimate",
    "AffineRecord",
    "gershgorin_bounds",
    "dense_spectral_estimate",
    "frobenius_alpha",
    "frobenius_alphas",
    "optimal_alpha",
    "contraction_from_kappa",
    "rescale_affine",
    "hermitian_estimate",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 2048


def contraction_from_kappa(kappa: float) -> float:
    """Contraction ``(k^2 - 1)/(k^2 + 1)`` of the optimally scaled iteration."""
    if kappa < 1:
        raise DomainError("condition number must be >= 1")
    if math.isinf(kappa):
        return 1.0
    k2 = kappa * kappa
    return (k2 - 1) / (k2 + 1)


def optimal_alpha(sigma_min: float, sigma_max: float) -> float:
    """``2/(s_min^2 + s_max^2)``: the scale minimising ``max |1 - alpha s^2|``."""
    return 2.0 / (sigma_min**2 + sigma_max**2)


@dataclass(frozen=True)
class SpectralEstimate:
    """Eigenvalue enclosure plus singular-value bounds for ``A^dagger A``.

    ``lambda_*`` enclose the eigenvalues (meaningful for Hermitian ``A``);
    ``sigma_*`` bound the singular values.  ``kappa_sq_upper`` bounds the
    condition number of ``A^dagger A`` and is infinite when zero cannot be
    excluded.
    """

    lambda_min_lower: float
    lambda_max_upper: float
    sigma_min_lower: float
    sigma_max_upper: float
    kappa_sq_upper: float
    alpha: float
    source: str = "gershgorin"

    @property
    def kappa_upper(self) -> float:
        return math.sqrt(self.kappa_sq_upper)

    @property
    def contraction(self) -> float:
        """Per-iteration contraction of ``I - alpha A^dagger A`` implied by the bounds."""
        if self.sigma_min_lower <= 0:
            return 1.0
        a = self.alpha
        return max(abs(1 - a * self.sigma_min_lower**2), abs(1 - a * self.sigma_max_upper**2))

    def contains(self, eigenvalues, tol: float = 0.0) -> bool:
        ev = np.asarray(eigenvalues).real
        return bool(np.all(ev >= self.lambda_min_lower - tol) and np.all(ev <= self.lambda_max_upper + tol))


def _from_interval(lo: float, hi: float, source: str) -> SpectralEstimate:
    smax = max(abs(lo), abs(hi))
    smin = 0.0 if lo <= 0 <= hi else min(abs(lo), abs(hi))
    if smax == 0:
        raise ZeroMatrix("operator is zero")
    if smin > 0:
        kappa_sq = (smax / smin) ** 2
        alpha = optimal_alpha(smin, smax)
    else:
        kappa_sq = math.inf
        alpha = 1.0 / smax**2
    return SpectralEstimate(lo, hi, smin, smax, kappa_sq, alpha, source)


def gershgorin_bounds(op: SparseOperator) -> SpectralEstimate:
    """Union of Gershgorin discs ``[A_jj - R_j, A_jj + R_j]``.

    ``R_j`` sums the off-diagonal magnitudes of column ``j``.

    Raises
    ------
    NotHermitian
        The real-interval enclosure needs a Hermitian operator.
    """
    if not op.hermitian:
        raise NotHermitian(f"{op.describe()} is not Hermitian")
    centre = np.zeros(op.dim)
    radius = [[] for _ in range(op.dim)]
    for j, row in enumerate(op.rows):
        for c, v in row:
            if c == j:
                centre[j] = v.real
            else:
                radius[c].append(abs(v))
    r = np.array([math.fsum(x) for x in radius])
    lo, hi = float(np.min(centre - r)), float(np.max(centre + r))
    if lo == hi == 0:
        raise ZeroMatrix("operator is zero")
    return _from_interval(lo, hi, "gershgorin")


def dense_spectral_estimate(op: SparseOperator) -> SpectralEstimate:
    """Exact-to-rounding bounds from a dense eigen/singular value solve (desk scale)."""
    m = op.dense()
    sv = np.linalg.svd(m, compute_uv=False)
    smax, smin = float(sv[0]), float(sv[-1])
    if smax == 0:
        raise ZeroMatrix("operator is zero")
    if op.hermitian:
        ev = np.linalg.eigvalsh(m)
        lo, hi = float(ev[0]), float(ev[-1])
    else:
        lo, hi = -smax, smax
    if smin > 0:
        kappa_sq = (smax / smin) ** 2
        alpha = optimal_alpha(smin, smax)
    else:
        kappa_sq = math.inf
        alpha = 1.0 / smax**2
    return SpectralEstimate(lo, hi, smin, smax, kappa_sq, alpha, "dense")


def hermitian_estimate(op: SparseOperator) -> SpectralEstimate:
    """Dense bounds up to ``DENSE_LIMIT`` rows, Gershgorin discs beyond."""
    if op.dim <= DENSE_LIMIT and op.hermitian:
        return dense_spectral_estimate(op)
    return gershgorin_bounds(op)


def frobenius_alphas(op: SparseOperator) -> tuple[float, float]:
    """Both convergent scales: ``1/sum|A_jk|^2`` and ``1/(max row sum * max column sum)``."""
    sq = math.fsum(abs(v) ** 2 for row in op.rows for _, v in row)
    if sq == 0:
        raise ZeroMatrix("operator is zero")
    row_sums = [math.fsum(abs(v) for _, v in row) for row in op.rows]
    col = [[] for _ in range(op.dim)]
    for row in op.rows:
        for c, v in row:
            col[c].append(abs(v))
    col_sums = [math.fsum(x) for x in col]
    return 1.0 / sq, 1.0 / (max(row_sums) * max(col_sums))


def frobenius_alpha(op: SparseOperator, formula: int | None = None) -> float:
    """Scale ``alpha`` guaranteeing convergence of ``I - alpha A^dagger A``.

    ``formula=1`` uses the squared Frobenius norm, ``formula=2`` the product
    of the maximum absolute row and column sums; the default returns the
    larger of the two.
    """
    a1, a2 = frobenius_alphas(op)
    if formula is None:
        return max(a1, a2)
    if formula == 1:
        return a1
    if formula == 2:
        return a2
    raise DomainError(f"unknown alpha formula {formula!r}")


@dataclass(frozen=True)
class AffineRecord:
    """``A' = scale * (A - shift * I)`` with exact rational parameters.

    ``e^{-A t} = exp(-shift * t) * e^{-A' t / scale}``.
    """

    lower: Fraction
    upper: Fraction
    target: tuple
    scale: Fraction
    shift: Fraction

    def scaled_time(self, t) -> Fraction:
        return Fraction(t) / self.scale

    def log_prefactor(self, t) -> Fraction:
        return -self.shift * Fraction(t)

    def prefactor(self, t) -> float:
        return math.exp(float(self.log_prefactor(t)))

    def undo(self, value):
        """Map an eigenvalue of ``A'`` back to ``A``."""
        return value / self.scale + self.shift


def rescale_affine(op: SparseOperator, bounds: SpectralEstimate, target=(-1, 1)):
    """Map ``[lambda_min, lambda_max]`` onto ``[0, 1]`` or ``[-1, 1]``.

    Returns the rescaled operator and the :class:`AffineRecord` that undoes it.

    Raises
    ------
    DegenerateSpectrumBounds
        When the bounds coincide; the operator is then a scalar multiple of
        the identity on its spectrum and ``value`` carries that scalar.
    """
    lo, hi = Fraction(bounds.lambda_min_lower), Fraction(bounds.lambda_max_upper)
    target = tuple(target)
    if hi < lo:
        raise DomainError("spectral bounds are inverted")
    if hi == lo:
        raise DegenerateSpectrumBounds("degenerate spectral bounds; treat as a scalar exponential",
                                       float(lo))
    if target == (0, 1):
        scale, shift = 1 / (hi - lo), lo
    elif target == (-1, 1):
        scale, shift = 2 / (hi - lo), (hi + lo) / 2
    else:
        raise DomainError(f"unsupported rescaling target {target}")
    ex = op.exact_entries
    rows: dict[int, list] = {j: [] for j in range(op.dim)}
    for (r, c), (re, im) in ex.items():
        if r == c:
            re = re - shift
        rows[r].append((c, scale * re, scale * im))
    for j in range(op.dim):
        if (j, j) not in ex and shift:
            rows[j].append((j, -scale * shift, Fraction(0)))
    rec = AffineRecord(lo, hi, target, scale, shift)
    new = SparseOperator(
        op.dim,
        lambda j: [(c, complex(float(re), float(im))) for c, re, im in rows[j]],
        {**op.family, "affine": [float(scale), float(shift)]},
        lambda j: rows[j],
    )
    return new, rec
