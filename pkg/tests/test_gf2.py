"""Tests for the GF(2) linear algebra layer.

Expected values are produced by independent brute-force oracles (exhaustive
enumeration of spans, kernels and subspace sets), never by the code under
test.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flamelab import gf2
from flamelab.gf2 import (
    EnumerationGuardError,
    GF2Matrix,
    GF2Vector,
    Subspace,
    dual_basis,
    dual_membership,
    enumerate_coset,
    sample_full_column_rank,
    sample_subspace,
    sample_superspace,
    solve_in_colspan,
)


def vec(*entries):
    return GF2Vector.from_bits(entries)


def brute_span(columns):
    """All XOR combinations of the given bit-int columns."""
    out = {0}
    for c in columns:
        out |= {x ^ c for x in out}
    return out


def brute_rank(columns, dim):
    return len(brute_span(columns)).bit_length() - 1


def all_subspaces(ambient, dim):
    """Every dim-dimensional subspace of GF(2)^ambient, as canonical keys."""
    seen = {}
    vectors = range(1, 1 << ambient)

    def rec(basis):
        if len(basis) == dim:
            s = Subspace(ambient_dim=ambient, basis=tuple(basis))
            seen[s.canonical_key()] = s
            return
        for v in vectors:
            cand = basis + [v]
            if gf2._rank_of_bitrows(cand) == len(cand):
                rec(cand)

    rec([])
    if dim == 0:
        return [Subspace.zero(ambient)]
    return list(seen.values())


class TestVectorsAndMatrices:
    def test_vector_basics(self):
        v = vec(1, 0, 1)
        assert v.dim == 3 and v.bits == 0b101
        assert v.to_list() == [1, 0, 1]
        assert v.bit(0) == 1 and v.bit(1) == 0
        assert str(v) == "101"

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            vec(1, 0) + vec(1, 0, 1)
        with pytest.raises(ValueError):
            vec(1, 0).dot(vec(1, 0, 1))

    def test_mul_vec_against_enumeration(self):
        A = GF2Matrix.from_columns([vec(1, 1, 0), vec(0, 1, 1)])
        assert A.mul_vec(vec(1, 1)).bits == 0b011 ^ 0b110

    def test_zero_dim_rejected(self):
        with pytest.raises(ValueError):
            GF2Vector(0, 0)


class TestSampleFullColumnRank:
    def test_1x1_forced(self):
        rng = np.random.default_rng(0)
        M = sample_full_column_rank(1, 1, rng)
        assert M.columns == (1,)

    def test_3x2_rank_by_elimination_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            M = sample_full_column_rank(3, 2, rng)
            assert brute_rank(M.columns, 3) == 2

    def test_wide_matrix_rejected(self):
        with pytest.raises(ValueError):
            sample_full_column_rank(2, 3, np.random.default_rng(0))

    def test_rank_matches_helper(self):
        rng = np.random.default_rng(3)
        for rows in range(1, 7):
            for cols in range(1, rows + 1):
                M = sample_full_column_rank(rows, cols, rng)
                assert gf2.rank(M) == cols == brute_rank(M.columns, rows)


class TestSolveInColspan:
    # span of {(1,1,0),(0,1,1)} enumerated by hand: {000,110,011,101}
    A = GF2Matrix.from_columns([vec(1, 1, 0), vec(0, 1, 1)])

    def test_solvable(self):
        z = solve_in_colspan(self.A, vec(1, 0, 1))
        assert z == vec(1, 1)

    def test_unsolvable(self):
        assert solve_in_colspan(self.A, vec(1, 1, 1)) is None

    def test_zero(self):
        z = solve_in_colspan(self.A, vec(0, 0, 0))
        assert z is not None and z.is_zero()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_in_colspan(self.A, vec(1, 0))

    @given(st.data())
    @settings(max_examples=80, deadline=None)
    def test_round_trip_full_rank(self, data):
        rows = data.draw(st.integers(1, 7))
        cols = data.draw(st.integers(1, rows))
        seed = data.draw(st.integers(0, 2**32 - 1))
        A = sample_full_column_rank(rows, cols, np.random.default_rng(seed))
        for zbits in range(1 << cols):
            z = GF2Vector(cols, zbits)
            back = solve_in_colspan(A, A.mul_vec(z))
            assert back == z

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_agrees_with_enumeration(self, data):
        rows = data.draw(st.integers(1, 6))
        cols = data.draw(st.integers(1, rows))
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        columns = tuple(int(rng.integers(0, 1 << rows)) for _ in range(cols))
        A = GF2Matrix(rows=rows, cols=cols, columns=columns)
        span = brute_span(columns)
        for vbits in range(1 << rows):
            z = solve_in_colspan(A, GF2Vector(rows, vbits))
            if vbits in span:
                assert z is not None and A.mul_vec(z).bits == vbits
            else:
                assert z is None


class TestDualMembership:
    def test_examples(self):
        A = GF2Matrix.from_columns([vec(1, 1, 0)])
        assert dual_membership(A, vec(1, 1, 0)) is True
        assert dual_membership(A, vec(1, 0, 0)) is False
        assert dual_membership(A, vec(0, 0, 0)) is True

    def test_dim_mismatch(self):
        A = GF2Matrix.from_columns([vec(1, 1, 0)])
        with pytest.raises(ValueError):
            dual_membership(A, vec(1, 0))


class TestDualBasis:
    def test_identity_has_trivial_dual(self):
        A = GF2Matrix.from_columns([vec(1, 0), vec(0, 1)])
        assert dual_basis(A).dim == 0

    def test_single_column_dual(self):
        A = GF2Matrix.from_columns([vec(1, 1, 0)])
        D = dual_basis(A)
        assert D.dim == 2
        assert D.contains(vec(1, 1, 0))
        assert D.contains(vec(0, 0, 1))

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_rank_nullity_and_membership(self, data):
        rows = data.draw(st.integers(1, 8))
        cols = data.draw(st.integers(1, 8))
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        columns = tuple(int(rng.integers(0, 1 << rows)) for _ in range(cols))
        A = GF2Matrix(rows=rows, cols=cols, columns=columns)
        D = dual_basis(A)
        assert D.dim == rows - brute_rank(columns, rows)
        dual_set = brute_span(D.basis)
        for vbits in range(1 << rows):
            v = GF2Vector(rows, vbits)
            assert dual_membership(A, v) == (vbits in dual_set)


class TestSuperspaceSampling:
    def test_equal_dim_returns_s(self):
        S = Subspace(ambient_dim=3, basis=(0b011, 0b100))
        T = sample_superspace(S, 2, np.random.default_rng(1))
        assert T.canonical_key() == S.canonical_key()

    def test_lines_uniform(self):
        S = Subspace.zero(2)
        counts = {0b01: 0, 0b10: 0, 0b11: 0}
        rng = np.random.default_rng(5)
        n = 30_000
        for _ in range(n):
            T = sample_superspace(S, 1, rng)
            counts[T.basis[0]] += 1
        for c in counts.values():
            sigma = (n * (1 / 3) * (2 / 3)) ** 0.5
            assert abs(c - n / 3) < 4 * sigma

    def test_containment_1000_draws(self):
        rng = np.random.default_rng(11)
        S = Subspace(ambient_dim=5, basis=(0b00111, 0b11000))
        for _ in range(1000):
            T = sample_superspace(S, 4, rng)
            assert T.contains_subspace(S)
            assert T.dim == 4

    def test_bounds_checked(self):
        S = Subspace(ambient_dim=3, basis=(0b001,))
        with pytest.raises(ValueError):
            sample_superspace(S, 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_superspace(S, 4, np.random.default_rng(0))

    def test_uniform_over_enumerated_superspaces(self):
        # ambient 4: empirical distribution over the enumerable superspace set
        S = Subspace(ambient_dim=4, basis=(0b0011,))
        targets = {T.canonical_key() for T in all_subspaces(4, 2) if T.contains_subspace(S)}
        rng = np.random.default_rng(13)
        n = 100_000
        counts = {t: 0 for t in targets}
        for _ in range(n):
            T = sample_superspace(S, 2, rng)
            counts[T.canonical_key()] += 1
        p = 1 / len(targets)
        sigma = (n * p * (1 - p)) ** 0.5
        for c in counts.values():
            assert abs(c - n * p) < 4 * sigma


class TestSubspaceSampling:
    def test_zero_dim(self):
        S = Subspace(ambient_dim=3, basis=(0b001, 0b010))
        T = sample_subspace(S, 0, np.random.default_rng(0))
        assert T.dim == 0

    def test_lines_of_plane_uniform(self):
        S = Subspace(ambient_dim=2, basis=(0b01, 0b10))
        counts = {0b01: 0, 0b10: 0, 0b11: 0}
        rng = np.random.default_rng(3)
        n = 30_000
        for _ in range(n):
            T = sample_subspace(S, 1, rng)
            counts[T.basis[0]] += 1
        sigma = (n * (1 / 3) * (2 / 3)) ** 0.5
        for c in counts.values():
            assert abs(c - n / 3) < 4 * sigma

    def test_always_contained(self):
        rng = np.random.default_rng(9)
        S = Subspace(ambient_dim=6, basis=(0b000111, 0b111000, 0b010010))
        for _ in range(500):
            T = sample_subspace(S, 2, rng)
            assert S.contains_subspace(T)

    def test_bounds(self):
        S = Subspace(ambient_dim=3, basis=(0b001,))
        with pytest.raises(ValueError):
            sample_subspace(S, 2, np.random.default_rng(0))


class TestEnumerateCoset:
    def test_example(self):
        A = GF2Matrix.from_columns([vec(1, 1)])
        got = {v.bits for v in enumerate_coset(A, vec(0, 1))}
        assert got == {0b10, 0b01}

    def test_zero_offset_identity(self):
        A = GF2Matrix.from_columns([vec(1, 0), vec(0, 1)])
        got = {v.bits for v in enumerate_coset(A, vec(0, 0))}
        assert got == {0, 1, 2, 3}

    def test_cardinality_and_membership(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            rows = int(rng.integers(2, 7))
            cols = int(rng.integers(1, rows + 1))
            A = sample_full_column_rank(rows, cols, rng)
            b = gf2.sample_vector(rows, rng)
            coset = enumerate_coset(A, b)
            assert len({v.bits for v in coset}) == 1 << cols
            for v in coset:
                assert solve_in_colspan(A, v + b) is not None

    def test_guard(self):
        cols = [GF2Vector(25, 1 << i) for i in range(21)]
        A = GF2Matrix.from_columns(cols)
        with pytest.raises(EnumerationGuardError):
            enumerate_coset(A, GF2Vector(25, 0))


class TestSubspaceType:
    def test_dependent_basis_rejected(self):
        with pytest.raises(ValueError):
            Subspace(ambient_dim=3, basis=(0b011, 0b011))

    def test_canonical_key_identifies_equal_spans(self):
        a = Subspace(ambient_dim=3, basis=(0b011, 0b101))
        b = Subspace(ambient_dim=3, basis=(0b110, 0b011))
        assert a.canonical_key() == b.canonical_key()
        c = Subspace(ambient_dim=3, basis=(0b011, 0b100))
        assert a.canonical_key() != c.canonical_key()

    def test_enumerate_bits(self):
        s = Subspace(ambient_dim=3, basis=(0b011, 0b100))
        assert sorted(s.enumerate_bits()) == sorted(brute_span([0b011, 0b100]))
