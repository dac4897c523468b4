"""Oracle-specified sparse operators and the builtin operator families."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, DomainError

__all__ = [
    "SparseOperator",
    "from_entries",
    "from_dense",
    "identity",
    "diagonal",
    "laplacian1d",
    "tfi_chain",
    "random_hermitian",
    "make_family",
    "FAMILIES",
]

Row = list  # list[(column, complex)]


def _exact_pair(z: complex) -> tuple[Fraction, Fraction]:
    return Fraction(float(z.real)), Fraction(float(z.imag))


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """An N x N operator given by a row oracle ``j -> [(col, value), ...]``.

    ``exact_row_oracle`` may supply exact rational entries as
    ``[(col, re, im), ...]``; without it the float entries are taken as exact.
    """

    dim: int
    row_oracle: Callable[[int], Row]
    family: dict = field(default_factory=dict)
    exact_row_oracle: Callable | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("operator dimension must be positive")

    @cached_property
    def rows(self) -> list[list[tuple[int, complex]]]:
        out = []
        for j in range(self.dim):
            row = {}
            for col, val in self.row_oracle(j):
                col = int(col)
                if not 0 <= col < self.dim:
                    raise DimensionMismatch(f"row {j} references column {col} outside [0, {self.dim})")
                val = complex(val)
                if val != 0:
                    row[col] = row.get(col, 0j) + val
            out.append(sorted(row.items()))
        return out

    @cached_property
    def exact_entries(self) -> dict[tuple[int, int], tuple[Fraction, Fraction]]:
        if self.exact_row_oracle is None:
            return {(j, c): _exact_pair(v) for j, row in enumerate(self.rows) for c, v in row}
        out = {}
        for j in range(self.dim):
            for c, re, im in self.exact_row_oracle(j):
                if re or im:
                    out[(j, int(c))] = (Fraction(re), Fraction(im))
        return out

    @cached_property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    @cached_property
    def d(self) -> int:
        """Sparsity: most nonzeros in any row."""
        return max((len(r) for r in self.rows), default=0)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        r = [j for j, row in enumerate(self.rows) for _ in row]
        c = [col for row in self.rows for col, _ in row]
        v = [val for row in self.rows for _, val in row]
        return sp.csr_matrix((np.array(v, dtype=np.complex128), (r, c)), shape=(self.dim, self.dim))

    def dense(self) -> np.ndarray:
        return self.csr.toarray()

    @cached_property
    def hermitian(self) -> bool:
        ex = self.exact_entries
        for (j, c), (re, im) in ex.items():
            tr, ti = ex.get((c, j), (0, 0))
            if tr != re or ti != -im:
                return False
        return True

    @cached_property
    def is_real(self) -> bool:
        return all(im == 0 for _, im in self.exact_entries.values())

    def adjoint(self) -> "SparseOperator":
        if self.hermitian:
            return self
        ex = self.exact_entries
        cols: dict[int, list] = {}
        for (j, c), (re, im) in ex.items():
            cols.setdefault(c, []).append((j, re, -im))
        return SparseOperator(
            self.dim,
            lambda j: [(c, complex(float(re), float(im))) for c, re, im in cols.get(j, [])],
            {**self.family, "adjoint": True},
            lambda j: cols.get(j, []),
        )

    def describe(self) -> str:
        name = self.family.get("name", "custom")
        return f"{name}(N={self.dim}, d={self.d})"


def from_entries(dim: int, entries, family=None) -> SparseOperator:
    """Operator from a mapping ``{(row, col): value}``; values may be complex or exact pairs."""
    rows: dict[int, list] = {}
    exact_rows: dict[int, list] = {}
    has_exact = False
    for (r, c), v in dict(entries).items():
        if isinstance(v, tuple):
            re, im = Fraction(v[0]), Fraction(v[1])
            has_exact = True
        else:
            re, im = _exact_pair(complex(v))
        rows.setdefault(int(r), []).append((int(c), complex(float(re), float(im))))
        exact_rows.setdefault(int(r), []).append((int(c), re, im))
    return SparseOperator(
        dim,
        lambda j: rows.get(j, []),
        dict(family or {"name": "entries"}),
        (lambda j: exact_rows.get(j, [])) if has_exact else None,
    )


def from_dense(m, family=None) -> SparseOperator:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    nz = np.argwhere(m != 0)
    return from_entries(m.shape[0], {(int(r), int(c)): m[r, c] for r, c in nz},
                        family or {"name": "dense"})


def identity(N: int, scale: float = 1.0) -> SparseOperator:
    return SparseOperator(N, lambda j: [(j, scale)], {"name": "identity", "N": N, "scale": scale})


def diagonal(values) -> SparseOperator:
    vals = [complex(v) for v in values]
    return SparseOperator(len(vals), lambda j: [(j, vals[j])],
                          {"name": "diagonal", "values": [v.real if v.imag == 0 else [v.real, v.imag] for v in vals]})


def laplacian1d(N: int) -> SparseOperator:
    """Open-chain Laplacian: 2 on the diagonal, -1 between neighbours."""

    def row(j):
        out = [(j, 2.0)]
        if j > 0:
            out.append((j - 1, -1.0))
        if j + 1 < N:
            out.append((j + 1, -1.0))
        return out

    return SparseOperator(N, row, {"name": "laplacian1d", "N": N})


def tfi_chain(n: int, J: float = 1.0, h: float = 1.0) -> SparseOperator:
    """Open transverse-field Ising chain ``-J sum Z_i Z_{i+1} - h sum X_i``.

    Site ``i`` is bit ``n-1-i`` of the basis index (site 0 is the leftmost
    tensor factor).
    """

    def row(j):
        z = [1 - 2 * ((j >> (n - 1 - i)) & 1) for i in range(n)]
        diag = -J * sum(z[i] * z[i + 1] for i in range(n - 1))
        out = [(j, diag)] if diag != 0 else []
        if h != 0:
            out.extend((j ^ (1 << (n - 1 - i)), -h) for i in range(n))
        return out

    return SparseOperator(1 << n, row, {"name": "tfi_chain", "n": n, "J": J, "h": h})


def random_hermitian(N: int, d: int, seed: int = 0, complex_entries: bool = True,
                     diagonal: bool = True) -> SparseOperator:
    """Seeded random Hermitian matrix with at most ``d`` nonzeros per row."""
    if d < 1:
        raise DomainError("sparsity d must be at least 1")
    rng = np.random.default_rng(seed)
    cap = d - 1 if diagonal else d
    deg = np.zeros(N, dtype=int)
    entries: dict[tuple[int, int], complex] = {}
    for j in rng.permutation(N):
        want = int(rng.integers(0, cap + 1)) if cap > 0 else 0
        tries = 0
        while deg[j] < want and tries < 4 * d:
            tries += 1
            l = int(rng.integers(0, N))
            if l == j or deg[l] >= cap or (min(j, l), max(j, l)) in entries:
                continue
            v = rng.normal() + (1j * rng.normal() if complex_entries else 0.0)
            entries[(min(j, l), max(j, l))] = v
            deg[j] += 1
            deg[l] += 1
    full = {}
    for (a, b), v in entries.items():
        full[(a, b)] = v
        full[(b, a)] = np.conj(v)
    if diagonal:
        for j in range(N):
            full[(j, j)] = complex(rng.normal())
    op = from_entries(N, full, {"name": "random_hermitian", "N": N, "d": d, "seed": seed,
                                "complex": complex_entries, "diagonal": diagonal})
    return op


FAMILIES = {
    "identity": identity,
    "diagonal": diagonal,
    "laplacian1d": laplacian1d,
    "tfi_chain": tfi_chain,
    "random_hermitian": random_hermitian,
}


def make_family(name: str, **params) -> SparseOperator:
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown operator family {name!r}; choose from {sorted(FAMILIES)}") from None
    return builder(**params)
