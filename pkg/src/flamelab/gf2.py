"""Bit-packed linear algebra over GF(2).

Vectors are immutable ``(bits, dim)`` pairs where ``bits`` is a Python int
bitset. Bit 0 is the *first* entry of the vector; this little-endian
convention is global to the package (oracle payloads, signatures and basis
labels all follow it).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

ENUM_GUARD_BITS = 20


class EnumerationGuardError(ValueError):
    """Raised when an operation would enumerate more than 2**20 elements."""


@dataclass(frozen=True)
class GF2Vector:
    dim: int
    bits: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0 <= self.bits < (1 << self.dim):
            raise ValueError(f"bits 0x{self.bits:x} out of range for dim {self.dim}")

    @classmethod
    def from_bits(cls, entries: Iterable[int]) -> "GF2Vector":
        entries = list(entries)
        bits = 0
        for i, e in enumerate(entries):
            if e & 1:
                bits |= 1 << i
        return cls(dim=len(entries), bits=bits)

    def bit(self, i: int) -> int:
        if not 0 <= i < self.dim:
            raise IndexError(i)
        return (self.bits >> i) & 1

    def to_list(self) -> List[int]:
        return [(self.bits >> i) & 1 for i in range(self.dim)]

    def __add__(self, other: "GF2Vector") -> "GF2Vector":
        _check_dim(self.dim, other.dim)
        return GF2Vector(self.dim, self.bits ^ other.bits)

    def dot(self, other: "GF2Vector") -> int:
        _check_dim(self.dim, other.dim)
        return (self.bits & other.bits).bit_count() & 1

    def is_zero(self) -> bool:
        return self.bits == 0

    def __str__(self) -> str:
        return "".join(str(b) for b in self.to_list())


def _check_dim(a: int, b: int) -> None:
    if a != b:
        raise ValueError(f"dimension mismatch: {a} != {b}")


@dataclass(frozen=True)
class GF2Matrix:
    """Column-major matrix over GF(2); each column is a rows-bit int."""

    rows: int
    cols: int
    columns: tuple

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if len(self.columns) != self.cols:
            raise ValueError("column count mismatch")
        for c in self.columns:
            if not 0 <= c < (1 << self.rows):
                raise ValueError("column out of range")

    @classmethod
    def from_columns(cls, cols: Iterable[GF2Vector]) -> "GF2Matrix":
        cols = list(cols)
        rows = cols[0].dim
        for c in cols:
            _check_dim(rows, c.dim)
        return cls(rows=rows, cols=len(cols), columns=tuple(c.bits for c in cols))

    def column(self, j: int) -> GF2Vector:
        return GF2Vector(self.rows, self.columns[j])

    def mul_vec(self, z: GF2Vector) -> GF2Vector:
        """Matrix-vector product A*z (z has one bit per column)."""
        _check_dim(self.cols, z.dim)
        return GF2Vector(self.rows, self.mul_bits(z.bits))

    def mul_bits(self, zbits: int) -> int:
        acc = 0
        for j in range(self.cols):
            if (zbits >> j) & 1:
                acc ^= self.columns[j]
        return acc

    def transpose_mul(self, v: GF2Vector) -> GF2Vector:
        """Row vector v^T * A, returned as a cols-dim vector."""
        _check_dim(self.rows, v.dim)
        out = 0
        for j in range(self.cols):
            if (v.bits & self.columns[j]).bit_count() & 1:
                out |= 1 << j
        return GF2Vector(self.cols, out)


def rank(M: GF2Matrix) -> int:
    return _rank_of_bitrows(list(M.columns))


def _rank_of_bitrows(rows: List[int]) -> int:
    """Rank of a list of int bitsets via elimination (order irrelevant)."""
    pivots: List[int] = []
    r = 0
    for v in rows:
        for p in pivots:
            low = p & -p
            if v & low:
                v ^= p
        if v:
            pivots.append(v)
            r += 1
    return r


def _reduce_against(v: int, pivots: List[int]) -> int:
    for p in pivots:
        low = p & -p
        if v & low:
            v ^= p
    return v


def solve_in_colspan(A: GF2Matrix, v: GF2Vector) -> Optional[GF2Vector]:
    """Return z with A*z = v if v is in the column span, else None.

    z is unique when A has full column rank.
    """
    _check_dim(A.rows, v.dim)
    # Eliminate on (column | e_j tag) pairs so the combination is recoverable.
    aug = [(A.columns[j], 1 << j) for j in range(A.cols)]
    pivots: List[tuple] = []
    for col, tag in aug:
        for p, ptag in pivots:
            low = p & -p
            if col & low:
                col ^= p
                tag ^= ptag
        if col:
            pivots.append((col, tag))
    w, z = v.bits, 0
    for p, ptag in pivots:
        low = p & -p
        if w & low:
            w ^= p
            z ^= ptag
    if w:
        return None
    return GF2Vector(A.cols, z)


def dual_membership(A: GF2Matrix, v: GF2Vector) -> bool:
    """True iff v^T A = 0."""
    return A.transpose_mul(v).is_zero()


@dataclass(frozen=True)
class Subspace:
    ambient_dim: int
    basis: tuple

    def __post_init__(self) -> None:
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be >= 1")
        for b in self.basis:
            if not 0 <= b < (1 << self.ambient_dim):
                raise ValueError("basis vector out of range")
        if _rank_of_bitrows(list(self.basis)) != len(self.basis):
            raise ValueError("basis vectors must be linearly independent")

    @classmethod
    def from_vectors(cls, ambient_dim: int, vectors: Iterable[GF2Vector]) -> "Subspace":
        vecs = list(vectors)
        for v in vecs:
            _check_dim(ambient_dim, v.dim)
        return cls(ambient_dim=ambient_dim, basis=tuple(v.bits for v in vecs))

    @classmethod
    def zero(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim=ambient_dim, basis=())

    @property
    def dim(self) -> int:
        return len(self.basis)

    def contains(self, v: GF2Vector) -> bool:
        _check_dim(self.ambient_dim, v.dim)
        return self.contains_bits(v.bits)

    def contains_bits(self, bits: int) -> bool:
        pivots: List[int] = []
        for b in self.basis:
            pivots.append(_reduce_against(b, pivots))
        return _reduce_against(bits, [p for p in pivots if p]) == 0

    def contains_subspace(self, other: "Subspace") -> bool:
        return all(self.contains_bits(b) for b in other.basis)

    def enumerate_bits(self) -> List[int]:
        if self.dim > ENUM_GUARD_BITS:
            raise EnumerationGuardError(f"2**{self.dim} elements exceed the guard")
        out = [0]
        for b in self.basis:
            out += [x ^ b for x in out]
        return out

    def canonical_key(self) -> tuple:
        """Reduced-echelon basis; equal subspaces share one key."""
        pivots: List[int] = []
        for b in self.basis:
            v = _reduce_against(b, pivots)
            if v:
                pivots.append(v)
        # clear each pivot position from the earlier rows, newest pivot first
        for i in range(len(pivots) - 1, -1, -1):
            low = pivots[i] & -pivots[i]
            for j in range(i):
                if pivots[j] & low:
                    pivots[j] ^= pivots[i]
        return tuple(sorted(pivots))


def dual_basis(A: GF2Matrix) -> Subspace:
    """Basis of {v : v^T A = 0}; dimension rows - rank(A).

    Eliminates the k unit vectors against the constraint syndromes
    v -> (v . col_j)_j; a unit vector whose syndrome reduces to zero yields
    a kernel vector.
    """
    k = A.rows
    cons = list(A.columns)
    basis: List[int] = []
    done_rows: List[tuple] = []  # (syndrome bits over constraints, vector)
    for i in range(k):
        v = 1 << i
        syn = 0
        for j, c in enumerate(cons):
            if (v & c).bit_count() & 1:
                syn |= 1 << j
        for s, w in done_rows:
            low = s & -s
            if syn & low:
                syn ^= s
                v ^= w
        if syn:
            done_rows.append((syn, v))
        else:
            basis.append(v)
    return Subspace(ambient_dim=k, basis=tuple(basis))


def colspan(A: GF2Matrix) -> Subspace:
    pivots: List[int] = []
    for c in A.columns:
        v = _reduce_against(c, pivots)
        if v:
            pivots.append(v)
    return Subspace(ambient_dim=A.rows, basis=tuple(pivots))


def sample_full_column_rank(rows: int, cols: int, rng: np.random.Generator) -> GF2Matrix:
    """Uniform full-column-rank rows x cols matrix, by rejection."""
    if not 1 <= cols <= rows:
        raise ValueError(f"need 1 <= cols <= rows, got {rows}x{cols}")
    while True:
        columns = tuple(int(rng.integers(0, 1 << rows)) for _ in range(cols))
        if _rank_of_bitrows(list(columns)) == cols:
            return GF2Matrix(rows=rows, cols=cols, columns=columns)


def sample_vector(dim: int, rng: np.random.Generator) -> GF2Vector:
    return GF2Vector(dim, int(rng.integers(0, 1 << dim)))


def sample_superspace(S: Subspace, target_dim: int, rng: np.random.Generator) -> Subspace:
    """Uniform superspace T of S with dim(T) = target_dim.

    Extends the basis with uniform vectors, rejecting dependent draws; every
    superspace admits the same number of extension tuples, hence uniformity.
    """
    if not S.dim <= target_dim <= S.ambient_dim:
        raise ValueError(f"need dim(S) <= target_dim <= ambient, got {target_dim}")
    basis = list(S.basis)
    pivots: List[int] = []
    for b in basis:
        pivots.append(_reduce_against(b, pivots))
    while len(basis) < target_dim:
        v = int(rng.integers(0, 1 << S.ambient_dim))
        red = _reduce_against(v, pivots)
        if red:
            basis.append(v)
            pivots.append(red)
    return Subspace(ambient_dim=S.ambient_dim, basis=tuple(basis))


def sample_subspace(S: Subspace, target_dim: int, rng: np.random.Generator) -> Subspace:
    """Uniform subspace of S with dimension target_dim."""
    if not 0 <= target_dim <= S.dim:
        raise ValueError(f"need 0 <= target_dim <= dim(S), got {target_dim}")
    if S.dim > ENUM_GUARD_BITS:
        raise EnumerationGuardError("subspace sampling enumerates S coordinates")
    basis: List[int] = []
    pivots: List[int] = []
    while len(basis) < target_dim:
        # uniform element of S via random coordinates in its basis
        coeff = int(rng.integers(0, 1 << S.dim))
        v = 0
        for i in range(S.dim):
            if (coeff >> i) & 1:
                v ^= S.basis[i]
        red = _reduce_against(v, pivots)
        if red:
            basis.append(v)
            pivots.append(red)
    return Subspace(ambient_dim=S.ambient_dim, basis=tuple(basis))


def enumerate_coset(A: GF2Matrix, b: GF2Vector) -> List[GF2Vector]:
    """All vectors A*z + b over z in GF(2)^cols."""
    _check_dim(A.rows, b.dim)
    if A.cols > ENUM_GUARD_BITS:
        raise EnumerationGuardError(f"2**{A.cols} elements exceed the guard")
    out = [b.bits]
    for j in range(A.cols):
        c = A.columns[j]
        out += [x ^ c for x in out]
    return [GF2Vector(A.rows, x) for x in out]


def enumerate_coset_bits(A: GF2Matrix, b_bits: int) -> List[int]:
    if A.cols > ENUM_GUARD_BITS:
        raise EnumerationGuardError(f"2**{A.cols} elements exceed the guard")
    out = [b_bits]
    for j in range(A.cols):
        c = A.columns[j]
        out += [x ^ c for x in out]
    return out
