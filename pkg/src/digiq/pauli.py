"""Pauli-string observables: decomposition, exact digital readout, sampling.

Site ``i`` of an ``n``-site string acts on bit ``n-1-i`` of the basis index,
so site 0 is the leftmost tensor factor.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import DimensionMismatch, DomainError, NonHermitianBlock, UnnormalizedState
from .fixedpoint import DEFAULT_FORMAT, FixedPointFormat, place_value_square
from .state import DigitalState, norm_squared_exact

__all__ = [
    "PAULI",
    "PauliString",
    "PauliSum",
    "KLocalSpec",
    "ChernoffPlan",
    "ExpectationReport",
    "pauli_decompose",
    "rotate_to_eigenbasis",
    "sigma_sums",
    "sigma_expectation_exact",
    "chernoff_trials",
    "chernoff_plan",
    "sample_sigma",
    "operator_expectation",
    "expectation_unnormalized",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-site Pauli factors, e.g. ``"XIZ"``."""

    label: str

    def __post_init__(self):
        lab = self.label.upper()
        if not lab or set(lab) - set("IXYZ"):
            raise DomainError(f"invalid Pauli label {self.label!r}")
        object.__setattr__(self, "label", lab)

    @classmethod
    def from_sites(cls, n: int, factors: dict[int, str]) -> "PauliString":
        lab = ["I"] * n
        for site, p in factors.items():
            if not 0 <= site < n:
                raise DomainError(f"site {site} outside [0, {n})")
            lab[site] = p
        return cls("".join(lab))

    @property
    def n(self) -> int:
        return len(self.label)

    @property
    def k(self) -> int:
        """Locality: number of non-identity factors."""
        return sum(c != "I" for c in self.label)

    def bit(self, site: int) -> int:
        return self.n - 1 - site

    @property
    def z_mask(self) -> int:
        """Index bits whose parity gives the eigenvalue after rotation."""
        return sum(1 << self.bit(i) for i, c in enumerate(self.label) if c != "I")

    def dense(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for c in self.label:
            out = np.kron(out, PAULI[c])
        return out

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class PauliSum:
    terms: tuple  # ((beta, PauliString), ...)

    def __post_init__(self):
        ns = {s.n for _, s in self.terms}
        if len(ns) > 1:
            raise DimensionMismatch(f"Pauli strings of mixed length {sorted(ns)}")
        object.__setattr__(self, "terms", tuple((float(b), s) for b, s in self.terms))

    @classmethod
    def single(cls, label: str, beta: float = 1.0) -> "PauliSum":
        return cls(((beta, PauliString(label)),))

    @classmethod
    def identity(cls, n: int) -> "PauliSum":
        return cls.single("I" * n)

    @property
    def n(self) -> int:
        return self.terms[0][1].n if self.terms else 0

    @property
    def K(self) -> int:
        return len(self.terms)

    @property
    def l1_norm(self) -> float:
        return math.fsum(abs(b) for b, _ in self.terms)

    def dense(self) -> np.ndarray:
        N = 1 << self.n
        out = np.zeros((N, N), dtype=complex)
        for b, s in self.terms:
            out += b * s.dense()
        return out


@dataclass(frozen=True)
class KLocalSpec:
    """Tensor product of Hermitian cluster blocks on disjoint site sets."""

    n: int
    clusters: tuple  # ((sites, matrix), ...)

    def __post_init__(self):
        seen: set[int] = set()
        cl = []
        for sites, m in self.clusters:
            sites = tuple(int(s) for s in sites)
            m = np.asarray(m, dtype=complex)
            if m.shape != (1 << len(sites),) * 2:
                raise DimensionMismatch(f"cluster on sites {sites} needs a {1 << len(sites)}-square block")
            if seen & set(sites) or len(set(sites)) != len(sites):
                raise DomainError(f"cluster sites {sites} overlap another cluster")
            if any(not 0 <= s < self.n for s in sites):
                raise DomainError(f"cluster sites {sites} outside [0, {self.n})")
            seen |= set(sites)
            cl.append((sites, m))
        object.__setattr__(self, "clusters", tuple(cl))

    @property
    def k(self) -> int:
        return sum(len(s) for s, _ in self.clusters)

    def dense(self) -> np.ndarray:
        """Full ``2^n`` matrix, identity on sites outside every cluster."""
        n = self.n
        out = np.eye(1 << n, dtype=complex)
        for sites, m in self.clusters:
            out = _embed(m, sites, n) @ out
        return out


def _embed(m, sites, n):
    """Embed a block acting on ``sites`` (in the given order) into ``n`` sites."""
    rest = [i for i in range(n) if i not in sites]
    order = list(sites) + rest
    full = np.kron(m, np.eye(1 << len(rest)))
    full = full.reshape([2] * (2 * n))
    perm = np.argsort(order)
    full = full.transpose(list(perm) + [n + p for p in perm])
    return full.reshape(1 << n, 1 << n)


def _expand_block(m: np.ndarray, s: int, cut: float):
    out = []
    for labels in itertools.product("IXYZ", repeat=s):
        p = np.ones((1, 1), dtype=complex)
        for c in labels:
            p = np.kron(p, PAULI[c])
        beta = np.trace(p @ m) / (1 << s)
        if abs(beta.imag) > 1e-12 * max(1.0, abs(beta.real)):
            raise NonHermitianBlock(f"coefficient of {''.join(labels)} is not real: {beta}")
        if abs(beta.real) >= cut:
            out.append(("".join(labels), float(beta.real)))
    return out


def pauli_decompose(spec: KLocalSpec, fmt: FixedPointFormat = DEFAULT_FORMAT) -> PauliSum:
    """Expand a k-local observable as ``sum_j beta_j Sigma_j``.

    Coefficients below the register resolution ``2**-f`` are dropped.

    Raises
    ------
    NonHermitianBlock
        If a cluster block is not Hermitian.
    """
    cut = math.ldexp(1.0, -fmt.f)
    per_cluster = []
    for sites, m in spec.clusters:
        if not np.allclose(m, m.conj().T, atol=0, rtol=0):
            raise NonHermitianBlock(f"block on sites {sites} is not Hermitian")
        per_cluster.append((sites, _expand_block(m, len(sites), cut)))
    terms = []
    for combo in itertools.product(*(c for _, c in per_cluster)):
        lab = ["I"] * spec.n
        beta = 1.0
        for (sites, _), (labels, b) in zip(per_cluster, combo):
            for site, c in zip(sites, labels):
                lab[site] = c
            beta *= b
        if abs(beta) >= cut:
            terms.append((beta, PauliString("".join(lab))))
    return PauliSum(tuple(terms))


# --- exact digital readout ---------------------------------------------------

def rotate_to_eigenbasis(re, im, sigma: PauliString):
    """Integer-exact rotation making ``sigma`` diagonal in the index basis.

    X sites get the unnormalised Hadamard ``[[1, 1], [1, -1]]``; Y sites get
    ``diag(1, -i)`` first.  Squared magnitudes grow by ``2**(#X + #Y)``.
    Returns ``(re, im, growth_bits)``.
    """
    flips = [sigma.bit(i) for i, c in enumerate(sigma.label) if c in "XY"]
    phase = [sigma.bit(i) for i, c in enumerate(sigma.label) if c == "Y"]
    peak = max((abs(int(v)) for v in itertools.chain(re, im)), default=0)
    wide = re.dtype == object or peak.bit_length() + len(flips) >= 62
    dt = object if wide else np.int64
    re = np.array(re, dtype=dt)
    im = np.array(im, dtype=dt)
    idx = np.arange(re.shape[0])
    for b in phase:
        # multiply by -i on the |1> half: (a + ib)(-i) = b - ia
        sel = (idx >> b) & 1 == 1
        r, i = re[sel].copy(), im[sel].copy()
        re[sel], im[sel] = i, -r
    for b in flips:
        lo = idx[(idx >> b) & 1 == 0]
        hi = lo | (1 << b)
        r0, r1, i0, i1 = re[lo], re[hi], im[lo], im[hi]
        re[lo], re[hi] = r0 + r1, r0 - r1
        im[lo], im[hi] = i0 + i1, i0 - i1
    return re, im, len(flips)


def _parity(x: np.ndarray) -> np.ndarray:
    """Bit parity of each entry of a non-negative int64 array."""
    shift = 32
    while shift:
        x = x ^ (x >> shift)
        shift //= 2
    return (x & 1).astype(np.uint8)


def sigma_sums(s: DigitalState, sigma: PauliString, method: str = "direct") -> tuple[int, int, int]:
    """Exact ``(plus, minus, growth_bits)`` in raw squared units.

    ``plus`` and ``minus`` sum squared rotated register words over the +1 and
    -1 eigenspaces; ``<x|sigma|x> = (plus - minus) / 2**(2f + growth_bits)``.
    ``method="place_value"`` forms every square from register bit pairs.
    """
    if sigma.n != s.n:
        raise DimensionMismatch(f"string on {sigma.n} sites, state has {s.n} index bits")
    re, im, g = rotate_to_eigenbasis(s.re, s.im, sigma)
    mask_bits = sigma.z_mask
    parity = _parity(np.arange(s.dim, dtype=np.int64) & mask_bits)
    if method == "direct":
        plus = kernels.masked_sumsq(re, im, parity, 0)
        minus = kernels.masked_sumsq(re, im, parity, 1)
    elif method == "place_value":
        # rotated words carry g extra integer bits
        if s.fmt.q_total + g + 1 > 128:
            raise DomainError("place-value readout supports registers up to 128 bits")
        fmt = FixedPointFormat(s.fmt.q_total + g + 1, s.fmt.f)
        plus = place_value_square([*re[parity == 0], *im[parity == 0]], fmt)
        minus = place_value_square([*re[parity == 1], *im[parity == 1]], fmt)
    else:
        raise DomainError(f"unknown readout method {method!r}")
    return int(plus), int(minus), g


def _norm_tol(s: DigitalState) -> Fraction:
    # rounding a unit vector perturbs |x|^2 by at most ~ 2 sqrt(N) 2^-f
    return Fraction(4 * (math.isqrt(s.dim) + 1), 1 << s.fmt.f)


def _check_normalized(s: DigitalState, tol=None):
    nrm = norm_squared_exact(s)
    tol = _norm_tol(s) if tol is None else Fraction(tol)
    if abs(nrm - 1) > tol:
        raise UnnormalizedState(f"|x|^2 = {float(nrm):.12g}; expected 1 within {float(tol):.3g}")


def _success_probability(plus: int, minus: int) -> Fraction:
    total = plus + minus
    return Fraction(plus, total) if total else Fraction(1, 2)


def sigma_expectation_exact(s: DigitalState, sigma: PauliString, method: str = "direct",
                            norm_tol=None) -> float:
    """Deterministic ``<sigma> = 2p - 1`` from the registers.

    ``p`` is the exact weight of the +1 eigenspace relative to the state's
    register norm, so the result is the expectation of the normalised
    register vector.

    Raises
    ------
    UnnormalizedState
        If ``|x|^2`` differs from 1 by more than the rounding budget.
    """
    _check_normalized(s, norm_tol)
    plus, minus, _ = sigma_sums(s, sigma, method)
    return float(2 * _success_probability(plus, minus) - 1)


def expectation_unnormalized(s: DigitalState, O: PauliSum) -> Fraction:
    """Exact ``<x|O|x>`` of the register vector, with no norm assumption."""
    total = Fraction(0)
    for beta, sigma in O.terms:
        plus, minus, g = sigma_sums(s, sigma)
        total += Fraction(beta) * Fraction(plus - minus, 1 << (2 * s.fmt.f + g))
    return total


# --- sampling ----------------------------------------------------------------

def chernoff_trials(delta: float, p_bound: float = 1.0, eps_m: float = 0.01) -> int:
    """Trials ``ceil(ln(2/eps_m) (8 p + 2 delta) / delta^2)`` for a delta-window at failure eps_m."""
    if not 0 < delta <= 1:
        raise DomainError(f"delta={delta} not in (0, 1]")
    if not 0 < eps_m < 1:
        raise DomainError(f"eps_m={eps_m} not in (0, 1)")
    if not 0 < p_bound <= 1:
        raise DomainError(f"p_bound={p_bound} not in (0, 1]")
    return math.ceil(math.log(2 / eps_m) * (8 * p_bound + 2 * delta) / delta**2)


@dataclass(frozen=True)
class ChernoffPlan:
    delta: float
    eps_m: float
    p_bound: float
    m: int

    def __post_init__(self):
        need = chernoff_trials(self.delta, self.p_bound, self.eps_m)
        if self.m < need:
            raise DomainError(f"m={self.m} below the required {need} trials")


def chernoff_plan(delta: float = 0.5, eps_m: float = 0.01, p_bound: float = 1.0) -> ChernoffPlan:
    return ChernoffPlan(delta, eps_m, p_bound, chernoff_trials(delta, p_bound, eps_m))


def _stream(seed: int, term: int) -> np.random.Generator:
    # Philox is counter based: trial i always reads the i-th output of (seed, term)
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), term & (2**64 - 1)]))


def sample_sigma(s: DigitalState, sigma: PauliString, plan: ChernoffPlan, seed: int = 0,
                 term_index: int = 0, p: Fraction | None = None) -> tuple[float, int]:
    """Simulate ``plan.m`` binary measurements of ``sigma``; return (mean, trials)."""
    if p is None:
        _check_normalized(s)
        plus, minus, _ = sigma_sums(s, sigma)
        p = _success_probability(plus, minus)
    u = _stream(seed, term_index).random(plan.m)
    hits = int(np.count_nonzero(u < float(p)))
    return 2.0 * hits / plan.m - 1.0, plan.m


@dataclass(frozen=True)
class ExpectationReport:
    value: float
    error_bound: float
    mode: str
    terms: tuple = field(default=())  # ((beta, label, sigma_value), ...)
    per_term_accuracy: float = 0.0


def operator_expectation(s: DigitalState, O: PauliSum, mode: str = "exact",
                         plan: ChernoffPlan | None = None, seed: int = 0) -> ExpectationReport:
    """``sum_j beta_j <Sigma_j>`` with error bound ``eps * sum |beta_j|``.

    In ``"exact"`` mode ``eps`` is the readout round-off ``k 2**(2-f)`` for the
    most local term; in ``"sampled"`` mode it is the plan's window ``delta``
    (each term failing with probability at most ``eps_m``).
    """
    if O.n != s.n:
        raise DimensionMismatch(f"observable on {O.n} sites, state has {s.n} index bits")
    _check_normalized(s)
    if mode == "sampled" and plan is None:
        plan = chernoff_plan()
    per = []
    for t, (beta, sigma) in enumerate(O.terms):
        plus, minus, _ = sigma_sums(s, sigma)
        p = _success_probability(plus, minus)
        if mode == "exact":
            v = float(2 * p - 1)
        elif mode == "sampled":
            v, _ = sample_sigma(s, sigma, plan, seed, t, p=p)
        else:
            raise DomainError(f"unknown mode {mode!r}")
        per.append((beta, sigma.label, v))
    value = math.fsum(b * v for b, _, v in per)
    if mode == "exact":
        kmax = max((sig.k for _, sig in O.terms), default=0)
        eps = max(kmax, 1) * math.ldexp(1.0, 2 - s.fmt.f)
    else:
        eps = plan.delta
    return ExpectationReport(value, eps * O.l1_norm, mode, tuple(per), eps)
