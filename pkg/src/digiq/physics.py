"""Euclidean-time ground-state projection and thermal expectation ratios.

Both evolve with ``e^{-H t}``.  To keep registers bounded the Hamiltonian is
shifted by its spectral lower bound (so every eigenvalue of the evolution is
at most one), long times are split into segments of bounded scaled time, and
after each segment the state is renormalised by a power of two.  The removed
scalar is tracked as a natural-log scale, so the true vector is
``exp(log_scale) * state``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .chebyshev import ExpmJob, expm_apply
from .errors import DimensionMismatch, DimensionTooLarge, DivisionByNegligible, DomainError
from .fixedpoint import FixedPointFormat
from .operators import SparseOperator
from .pauli import PauliSum, expectation_unnormalized
from .spectral import SpectralEstimate, hermitian_estimate
from .state import DigitalState, basis_state, from_vector, shift_state

__all__ = [
    "EvolutionResult",
    "GroundStateJob",
    "GroundStateDiagnostics",
    "ThermalJob",
    "ThermalResult",
    "evolve",
    "ground_state_project",
    "expectation_ratio",
    "thermal_ratio",
    "thermal_sweep",
    "THERMAL_MAX_DIM",
]

THERMAL_MAX_DIM = 4096
MAX_SCALED_TIME = 16.0
_LN2 = math.log(2)


@dataclass(frozen=True)
class EvolutionResult:
    state: DigitalState
    log_scale: float
    segments: int
    products: int


def _renormalize(s: DigitalState) -> tuple[DigitalState, int]:
    """Scale by ``2**k`` so the largest register magnitude lies in ``[1/2, 1)``."""
    peak = max(int(np.max(np.abs(s.re.astype(object)))), int(np.max(np.abs(s.im.astype(object)))))
    if peak == 0:
        return s, 0
    k = s.fmt.f - peak.bit_length()
    if k == 0:
        return s, 0
    return shift_state(s, k), k


def evolve(H: SparseOperator, b, t, eps: float = 1e-8, spectral: SpectralEstimate | None = None,
           fmt: object = "auto", min_segments: int = 1) -> EvolutionResult:
    """``e^{-H t} b`` as ``exp(log_scale) * state`` with absolute error about ``eps |b|``.

    The time is split so each segment has scaled time at most
    ``MAX_SCALED_TIME`` (and into at least ``min_segments`` pieces).
    """
    est = spectral or hermitian_estimate(H)
    t = Fraction(t)
    if t < 0:
        raise DomainError("time must be non-negative")
    s = b if isinstance(b, DigitalState) else from_vector(np.asarray(b, dtype=complex),
                                                          fmt if isinstance(fmt, FixedPointFormat)
                                                          else FixedPointFormat())
    if t == 0:
        return EvolutionResult(s, 0.0, 0, 0)
    lo, hi = Fraction(est.lambda_min_lower), Fraction(est.lambda_max_upper)
    half = (hi - lo) / 2
    segs = max(min_segments, math.ceil(float(t * half) / MAX_SCALED_TIME))
    dt = t / segs
    eps_seg = eps / (8 * segs)
    log_scale = 0.0
    products = 0
    s, k = _renormalize(s)
    log_scale -= k * _LN2
    for _ in range(segs):
        # contract is relative to the folded prefactor exp(-half dt); undo it
        eps0 = eps_seg * math.exp(float(half * dt))
        job = ExpmJob(H, dt, eps0=eps0, spectral=est, fmt=fmt, log_scale=float(lo * dt))
        res = expm_apply(job, s, return_info=True)
        products += res.products
        s, k = _renormalize(res.state)
        log_scale += -float(lo * dt) - k * _LN2
    return EvolutionResult(s, log_scale, segs, products)


@dataclass(frozen=True)
class GroundStateJob:
    """Project ``ansatz`` onto the ground state of ``hamiltonian`` by ``e^{-H T}``.

    ``ansatz`` is a vector, a :class:`DigitalState` or a callable ``j -> amplitude``.
    """

    hamiltonian: SparseOperator
    ansatz: object
    T: float
    eps: float = 1e-8
    gap: float | None = None
    fmt: object = "auto"

    def __post_init__(self):
        if float(self.T) < 0:
            raise DomainError("Euclidean time must be non-negative")
        if not self.eps > 0:
            raise DomainError("eps must be positive")


@dataclass(frozen=True)
class GroundStateDiagnostics:
    log_scale: float
    log_norm: float
    gap: float | None
    gap_source: str | None
    contamination_bound: float | None
    segments: int
    products: int
    fmt: FixedPointFormat
    energy_lower: float

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm) if self.log_norm < 700 else math.inf


def _ansatz_vector(ansatz, dim: int):
    if isinstance(ansatz, DigitalState):
        return ansatz
    if callable(ansatz):
        return np.array([ansatz(j) for j in range(dim)], dtype=complex)
    return np.asarray(ansatz, dtype=complex)


def _dense_gap(H: SparseOperator) -> float | None:
    if H.dim > THERMAL_MAX_DIM:
        return None
    ev = np.linalg.eigvalsh(H.dense())
    return float(ev[1] - ev[0]) if len(ev) > 1 else None


def ground_state_project(job: GroundStateJob) -> tuple[DigitalState, GroundStateDiagnostics]:
    """Unnormalised ``e^{-H T} psi`` (up to ``exp(diagnostics.log_scale)``).

    When no gap is supplied it is taken from a dense eigensolve at desk
    scale and flagged ``"dense-oracle"``; the excited-state contamination
    bound is ``exp(-gap T)``.
    """
    H = job.hamiltonian
    if not H.hermitian:
        raise DomainError("Hamiltonian must be Hermitian")
    est = hermitian_estimate(H)
    psi = _ansatz_vector(job.ansatz, H.dim)
    res = evolve(H, psi, job.T, job.eps, est, job.fmt)
    s = res.state
    norm_sq = sum(int(v) ** 2 for v in s.re) + sum(int(v) ** 2 for v in s.im)
    if norm_sq:
        log_norm = res.log_scale + 0.5 * (math.log(norm_sq) - 2 * s.fmt.f * _LN2)
    else:
        log_norm = -math.inf
    if job.gap is not None:
        gap, source = float(job.gap), "given"
    else:
        gap = _dense_gap(H)
        source = "dense-oracle" if gap is not None else None
    bound = math.exp(-gap * float(job.T)) if gap is not None else None
    diag = GroundStateDiagnostics(res.log_scale, log_norm, gap, source, bound, res.segments,
                                  res.products, s.fmt, est.lambda_min_lower)
    return s, diag


def expectation_ratio(state: DigitalState, O1: PauliSum, O2: PauliSum | None = None) -> float:
    """``<O1>/<O2>`` on an unnormalised state; ``O2`` defaults to the identity.

    Both expectations are exact rationals of the register vector, so any
    common scale of the state cancels exactly.
    """
    if O2 is None:
        O2 = PauliSum.identity(state.n)
    for O in (O1, O2):
        if O.n != state.n:
            raise DimensionMismatch(f"observable on {O.n} qubits, state has {state.n}")
    den = expectation_unnormalized(state, O2)
    if abs(den) < Fraction(1, 1 << state.fmt.f):
        raise DivisionByNegligible(f"denominator {float(den):.3g} below register resolution 2^-{state.fmt.f}")
    num = expectation_unnormalized(state, O1)
    return float(num / den)


@dataclass(frozen=True)
class ThermalJob:
    hamiltonian: SparseOperator
    beta: float
    observable: PauliSum
    eps: float = 1e-8
    fmt: object = "auto"
    min_segments: int = 1

    def __post_init__(self):
        if float(self.beta) < 0:
            raise DomainError("inverse temperature must be non-negative")
        if not self.eps > 0:
            raise DomainError("eps must be positive")


@dataclass(frozen=True)
class ThermalResult:
    value: float
    imag_residue: float
    sweep_size: int
    products: int
    fmt: FixedPointFormat | None
    efficient: bool = False
    per_basis: tuple = field(default=(), repr=False)


def thermal_sweep(job: ThermalJob, workers: int = 1) -> ThermalResult:
    """``Tr(e^{-beta H/2} O e^{-beta H/2}) / Tr(e^{-beta H})`` by an exact basis sweep.

    ``z_i = e^{-beta H/2} e_i`` for every basis vector; the ratio of
    ``sum_i <z_i|O|z_i>`` to ``sum_i <z_i|z_i>`` cancels the partition
    function.  Cost is ``N`` exponentials, so this is desk scale only.
    Basis vectors are independent; ``workers > 1`` evaluates them in a
    thread pool, and accumulation stays in ascending index order.
    """
    H, O = job.hamiltonian, job.observable
    N = H.dim
    if N > THERMAL_MAX_DIM:
        raise DimensionTooLarge(f"basis sweep over N={N} exceeds {THERMAL_MAX_DIM}")
    n = max(1, (N - 1).bit_length())
    if O.n != n:
        raise DimensionMismatch(f"observable on {O.n} qubits, operator needs {n}")
    est = hermitian_estimate(H)
    fmt = job.fmt if isinstance(job.fmt, FixedPointFormat) else FixedPointFormat()
    eye = PauliSum.identity(n)

    def one(i):
        res = evolve(H, basis_state(n, i, fmt), Fraction(job.beta) / 2, job.eps, est, job.fmt,
                     job.min_segments)
        return (res.log_scale, expectation_unnormalized(res.state, O),
                expectation_unnormalized(res.state, eye), res.products, res.state.fmt)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, range(N)))
    else:
        out = [one(i) for i in range(N)]
    rows = [o[:3] for o in out]
    products = sum(o[3] for o in out)
    out_fmt = out[-1][4]
    top = max(L for L, _, w in rows if w != 0)
    with mpmath.workprec(192):
        num = mpmath.mpf(0)
        den = mpmath.mpf(0)
        for L, o, w in rows:  # ascending basis index
            weight = mpmath.exp(2 * (mpmath.mpf(L) - top))
            num += weight * mpmath.mpf(o.numerator) / o.denominator
            den += weight * mpmath.mpf(w.numerator) / w.denominator
        value = float(num / den)
    # Pauli-string expectations of the register vector are real by construction
    return ThermalResult(value, 0.0, N, products, out_fmt, False, tuple(rows))


def thermal_ratio(job: ThermalJob) -> float:
    return thermal_sweep(job).value
