"""Block-diagonal decomposition of sparse operators and block application.

Off-diagonal nonzeros are edges of an undirected graph on the basis indices.
A greedy edge colouring splits them into matchings; each colour class is a
block-diagonal part of independent 2x2 blocks, and the diagonal forms one
more part of 1x1 blocks.  Applying a 2x2 block multiplies the diagonal pair
in place and the off-diagonal pair on the swapped registers.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NotHermitian
from .fixedpoint import FixedPointFormat, to_raw
from .kernels import BlockArrays
from .operators import SparseOperator
from .state import DigitalState, _combine

__all__ = [
    "Diag1",
    "Block2",
    "BlockDiagonalPart",
    "Decomposition",
    "TransformedOperator",
    "greedy_edge_coloring",
    "edge_color_decompose",
    "decomposition_of",
    "apply_operator",
    "swap_pair",
]

Exact = tuple[Fraction, Fraction]
_ZERO: Exact = (Fraction(0), Fraction(0))


@dataclass(frozen=True)
class Diag1:
    j: int
    a_jj: complex
    exact: tuple = (_ZERO,)

    @property
    def indices(self) -> tuple[int, ...]:
        return (self.j,)


@dataclass(frozen=True)
class Block2:
    """2x2 block on indices ``(j, j + mu)``; exact values ordered ll, lh, hl, hh."""

    j: int
    k: int
    a_jj: complex
    a_jk: complex
    a_kj: complex
    a_kk: complex
    exact: tuple = (_ZERO, _ZERO, _ZERO, _ZERO)

    @property
    def mu(self) -> int:
        return self.k - self.j

    @property
    def indices(self) -> tuple[int, ...]:
        return (self.j, self.k)


@dataclass(frozen=True)
class BlockDiagonalPart:
    color: int
    blocks: tuple

    def index_sets_disjoint(self) -> bool:
        seen: set[int] = set()
        for b in self.blocks:
            for i in b.indices:
                if i in seen:
                    return False
                seen.add(i)
        return True

    def entries(self):
        """Yield ``(row, col, exact_re, exact_im)`` for every stored entry."""
        for b in self.blocks:
            if isinstance(b, Diag1):
                yield (b.j, b.j, *b.exact[0])
            else:
                (ll, lh, hl, hh) = b.exact
                for (r, c), v in zip(((b.j, b.j), (b.j, b.k), (b.k, b.j), (b.k, b.k)), (ll, lh, hl, hh)):
                    if v[0] or v[1]:
                        yield (r, c, *v)

    def dense(self, dim: int) -> np.ndarray:
        m = np.zeros((dim, dim), dtype=np.complex128)
        for r, c, re, im in self.entries():
            m[r, c] += complex(float(re), float(im))
        return m


def swap_pair(x: np.ndarray, j: int, k: int) -> np.ndarray:
    """Reflection exchanging registers ``j`` and ``k``; an involution."""
    y = np.array(x, copy=True)
    y[j], y[k] = x[k], x[j]
    return y


def greedy_edge_coloring(edges) -> list[int]:
    """Colour edges in the given order with the lowest colour free at both ends.

    Uses at most ``2*D - 1`` colours for maximum degree ``D``.
    """
    used: dict[int, set[int]] = {}
    colors = []
    for a, b in edges:
        ua, ub = used.setdefault(a, set()), used.setdefault(b, set())
        c = 0
        while c in ua or c in ub:
            c += 1
        ua.add(c)
        ub.add(c)
        colors.append(c)
    return colors


def _pack(exact_vals, fmt: FixedPointFormat, index: int):
    out = []
    for re, im in exact_vals:
        out.append(to_raw(re, fmt, index))
        out.append(to_raw(im, fmt, index))
    return out


class _BlockSource:
    """Shared machinery: float CSR for shadows and cached raw block arrays."""

    dim: int

    def _exact_blocks(self):
        """Yield ``(part_index, lo, hi, exact_values)`` in application order."""
        raise NotImplementedError

    def block_arrays(self, fmt: FixedPointFormat) -> BlockArrays:
        cache = self._cache
        if fmt not in cache:
            lo, hi, rows, offsets = [], [], [], [0]
            current = None
            for part, j, k, vals in self._exact_blocks():
                if current is not None and part != current:
                    offsets.append(len(lo))
                current = part
                lo.append(j)
                hi.append(k)
                vals = list(vals) + [_ZERO] * (4 - len(vals))
                rows.append(_pack(vals, fmt, j))
            offsets.append(len(lo))
            if offsets[:2] == [0, 0]:
                offsets = offsets[1:]
            coef = np.array(rows, dtype=fmt.dtype).reshape(len(rows), 8)
            cache[fmt] = BlockArrays(np.array(lo, dtype=np.int64), np.array(hi, dtype=np.int64),
                                     coef if fmt.wide else np.ascontiguousarray(coef), tuple(offsets))
        return cache[fmt]


@dataclass(frozen=True, eq=False)
class Decomposition(_BlockSource):
    """Sum of block-diagonal parts reproducing an operator exactly."""

    dim: int
    parts: tuple
    hermitian: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def part_count(self) -> int:
        return len(self.parts)

    def _exact_blocks(self):
        for p, part in enumerate(self.parts):
            for b in part.blocks:
                if isinstance(b, Diag1):
                    yield p, b.j, -1, b.exact
                else:
                    yield p, b.j, b.k, b.exact

    def dense(self) -> np.ndarray:
        return sum((p.dense(self.dim) for p in self.parts), np.zeros((self.dim, self.dim), complex))

    def exact_dense(self) -> dict[tuple[int, int], Exact]:
        """Entrywise exact sum of the parts (zeros omitted)."""
        acc: dict[tuple[int, int], list] = {}
        for part in self.parts:
            for r, c, re, im in part.entries():
                cur = acc.setdefault((r, c), [Fraction(0), Fraction(0)])
                cur[0] += re
                cur[1] += im
        return {k: (v[0], v[1]) for k, v in acc.items() if v[0] or v[1]}

    @property
    def csr(self) -> sp.csr_matrix:
        if "csr" not in self._cache:
            r, c, v = [], [], []
            for part in self.parts:
                for row, col, re, im in part.entries():
                    r.append(row)
                    c.append(col)
                    v.append(complex(float(re), float(im)))
            self._cache["csr"] = sp.csr_matrix((np.array(v, dtype=complex), (r, c)),
                                               shape=(self.dim, self.dim))
        return self._cache["csr"]

    def transformed(self, scale=1, shift=0, adjoint: bool = False) -> "TransformedOperator":
        return TransformedOperator(self, Fraction(scale), Fraction(shift), adjoint)


def _conj(v: Exact) -> Exact:
    return (v[0], -v[1])


def _mul(s: Fraction, v: Exact) -> Exact:
    return (s * v[0], s * v[1])


@dataclass(frozen=True, eq=False)
class TransformedOperator(_BlockSource):
    """``scale * (B - shift * I)`` with ``B`` the decomposed operator or its adjoint.

    Coefficients are formed exactly and rounded once per format.
    """

    base: Decomposition
    scale: Fraction = Fraction(1)
    shift: Fraction = Fraction(0)
    adjoint: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.base.dim

    def _exact_blocks(self):
        s, mu = self.scale, self.shift
        covered = set()
        for p, j, k, vals in self.base._exact_blocks():
            if k < 0:
                v = _conj(vals[0]) if self.adjoint else vals[0]
                covered.add(j)
                yield p, j, k, (_mul(s, (v[0] - mu, v[1])),)
            else:
                ll, lh, hl, hh = vals
                if self.adjoint:
                    ll, lh, hl, hh = _conj(ll), _conj(hl), _conj(lh), _conj(hh)
                yield p, j, k, tuple(_mul(s, v) for v in (ll, lh, hl, hh))
        if mu:
            # the shift touches diagonal entries absent from the operator
            missing = [j for j in range(self.dim) if j not in covered]
            for j in missing:
                yield -1, j, -1, ((-s * mu, Fraction(0)),)

    @property
    def csr(self) -> sp.csr_matrix:
        if "csr" not in self._cache:
            m = self.base.csr
            if self.adjoint:
                m = m.conj().T
            m = float(self.scale) * (m - float(self.shift) * sp.identity(self.dim, format="csr"))
            self._cache["csr"] = sp.csr_matrix(m)
        return self._cache["csr"]

    def dense(self) -> np.ndarray:
        return self.csr.toarray()


def _build(op: SparseOperator) -> Decomposition:
    ex = op.exact_entries
    diag = []
    edges = set()
    for (r, c), v in ex.items():
        if r == c:
            diag.append(Diag1(r, complex(float(v[0]), float(v[1])), (v,)))
        else:
            edges.add((min(r, c), max(r, c)))
    edges = sorted(edges)
    colors = greedy_edge_coloring(edges)
    classes: dict[int, list] = {}
    for (j, k), col in zip(edges, colors):
        vals = (_ZERO, ex.get((j, k), _ZERO), ex.get((k, j), _ZERO), _ZERO)
        cv = [complex(float(a), float(b)) for a, b in vals]
        classes.setdefault(col, []).append(Block2(j, k, *cv, exact=vals))
    parts = []
    if diag:
        parts.append(BlockDiagonalPart(0, tuple(sorted(diag, key=lambda b: b.j))))
    for col in sorted(classes):
        parts.append(BlockDiagonalPart(len(parts), tuple(classes[col])))
    return Decomposition(op.dim, tuple(parts), op.hermitian)


_CACHE: "weakref.WeakKeyDictionary[SparseOperator, Decomposition]" = weakref.WeakKeyDictionary()


def decomposition_of(op: SparseOperator) -> Decomposition:
    """Cached block layout of any operator.

    Non-Hermitian operators reuse the colouring of the symmetrised sparsity
    pattern, with independent entries in the two off-diagonal slots.
    """
    dec = _CACHE.get(op)
    if dec is None:
        dec = _CACHE[op] = _build(op)
    return dec


def edge_color_decompose(op: SparseOperator) -> Decomposition:
    """Split a Hermitian operator into block-diagonal parts.

    Raises
    ------
    NotHermitian
        If ``A[j, l] != conj(A[l, j])`` for some stored pair.
    """
    if not op.hermitian:
        raise NotHermitian(f"{op.describe()} is not Hermitian; edge colouring needs undirected edges")
    return decomposition_of(op)


def apply_operator(op, s: DigitalState) -> DigitalState:
    """``A x`` accumulated part by part and rounded once per amplitude."""
    if isinstance(op, SparseOperator):
        op = decomposition_of(op)
    if op.dim > s.dim:
        raise DimensionMismatch(f"operator dimension {op.dim} exceeds state dimension {s.dim}")
    return _combine(s.fmt, s.n, op=op, x=s)
