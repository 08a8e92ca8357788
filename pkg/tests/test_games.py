"""Security-game machinery tests with enumeration cross-checks."""

import math

import numpy as np
import pytest

from flamelab import games, gf2
from flamelab.oracles import ClassicalOracle, OssParams, derive_rng, gen_oss_oracles
from flamelab.games import (
    QueryProgram,
    RestrictionViolation,
    empty_leakage_guesser_script,
    estimate_query_weight,
    honest_forwarder_script,
    honest_rom_forwarder_script,
    oneshot_structural_check,
    point_query_program,
    rom_guesser_script,
    rom_section_only_script,
    rom_violating_script,
    run_oss_incompressibility,
    run_rom_incompressibility,
    subspace_stats,
    uniform_query_program,
    violating_script,
)


def cube_oracle():
    return ClassicalOracle("cube", 3, 3, lambda x: (x * x * x) & np.uint64(7))


class TestQueryWeight:
    def test_classical_point_query_weight_one(self):
        rep = estimate_query_weight(
            point_query_program(cube_oracle(), 6), lambda x: x == 6,
            128, np.random.default_rng(0),
        )
        assert rep.weights == {6: 1.0}
        assert rep.total_weight() == 1.0

    def test_uniform_superposition_quarter_each(self):
        n = 20_000
        rep = estimate_query_weight(
            uniform_query_program(cube_oracle(), 2), lambda x: True,
            n, np.random.default_rng(1),
        )
        sigma = math.sqrt(0.25 * 0.75 / n)
        assert set(rep.weights) == {0, 1, 2, 3}
        for w in rep.weights.values():
            assert abs(w - 0.25) < 3 * sigma + 1e-9

    def test_unsatisfied_predicate_empty_report(self):
        rep = estimate_query_weight(
            point_query_program(cube_oracle(), 1), lambda x: False,
            64, np.random.default_rng(2),
        )
        assert rep.weights == {}

    def test_declared_count_enforced(self):
        prog = point_query_program(cube_oracle(), 0)
        prog.declared_queries = 3
        with pytest.raises(ValueError):
            estimate_query_weight(prog, lambda x: True, 8, np.random.default_rng(0))

    def test_convergence_rate(self):
        # estimator error shrinks roughly as 1/sqrt(samples)
        rng = np.random.default_rng(5)
        errs = []
        for n in (500, 32_000):
            rep = estimate_query_weight(
                uniform_query_program(cube_oracle(), 2), lambda x: True, n,
                np.random.default_rng(9),
            )
            errs.append(max(abs(w - 0.25) for w in rep.weights.values()))
        assert errs[1] < errs[0]
        assert errs[1] < 4 * errs[0] * math.sqrt(500 / 32_000)


@pytest.fixture(scope="module")
def game_inst():
    return gen_oss_oracles(OssParams(6, 4, 6), 3)


class TestOssIncompressibility:
    def test_honest_forwarder_exact_count(self, game_inst):
        rep = run_oss_incompressibility(
            game_inst, honest_forwarder_script(5), 3, 11
        )
        for tr in rep["trials"]:
            assert not tr["violation"]
            assert tr["distinct_valid_vk"] == 5
            assert tr["within_bound"]
            assert tr["list_bound"] == 2 * tr["genqkey_queries"]

    def test_restriction_violation_detected(self, game_inst):
        rep = run_oss_incompressibility(game_inst, violating_script(), 3, 11)
        assert all(tr["violation"] for tr in rep["trials"])

    def test_guesser_rate_matches_counting(self, game_inst):
        # coset members with a fixed first bit: 2^(n-r-1) of 2^k per key
        trials, guesses = 6, 500
        rep = run_oss_incompressibility(
            game_inst, empty_leakage_guesser_script(guesses), trials, 13
        )
        total = sum(tr["valid_outputs"] for tr in rep["trials"])
        n = trials * guesses
        p = 2.0 ** (6 - 4 - 1) / 2.0**6
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(total - n * p) < 4 * sigma

    def test_sign_game_variant(self, game_inst):
        rep = run_oss_incompressibility(
            game_inst, honest_forwarder_script(3), 1, 7, restricted_oracle="sign"
        )
        # message||signature pairs are not dual vectors in general
        assert rep["trials"][0]["distinct_valid_vk"] <= 3

    def test_reproducible(self, game_inst):
        a = run_oss_incompressibility(game_inst, honest_forwarder_script(4), 2, 9)
        b = run_oss_incompressibility(game_inst, honest_forwarder_script(4), 2, 9)
        assert a == b


class TestRomIncompressibility:
    def test_honest_forwarder(self):
        rep = run_rom_incompressibility(8, 6, honest_rom_forwarder_script(7), 3, 5)
        for tr in rep["trials"]:
            assert tr["distinct_valid_outside"] == 7
            assert tr["stage1_query_budget"] == 7
            assert tr["within_bound"]

    def test_guesser_union_bound_rate(self):
        trials, guesses = 8, 250
        rep = run_rom_incompressibility(6, 5, rom_guesser_script(guesses), trials, 7)
        hits = sum(tr["distinct_valid_outside"] for tr in rep["trials"])
        lam = trials * guesses * 2.0**-5
        assert abs(hits - lam) < 4 * math.sqrt(lam)

    def test_section_only_pairs_excluded(self):
        rep = run_rom_incompressibility(8, 6, rom_section_only_script(5), 2, 5)
        for tr in rep["trials"]:
            assert tr["distinct_valid_outside"] == 0
            assert tr["valid_inside_excluded"] == 5

    def test_violation_detected(self):
        rep = run_rom_incompressibility(8, 6, rom_violating_script(), 2, 5)
        assert all(tr["violation"] for tr in rep["trials"])

    def test_domain_guard(self):
        with pytest.raises(ValueError):
            run_rom_incompressibility(25, 6, honest_rom_forwarder_script(2), 1, 0)


def enumerate_subspaces_of(S, dim):
    """All dim-dimensional subspaces of S (test oracle)."""
    seen = {}
    elems = [b for b in S.enumerate_bits() if b]

    def rec(basis):
        if len(basis) == dim:
            sub = gf2.Subspace(S.ambient_dim, tuple(basis))
            seen[sub.canonical_key()] = sub
            return
        for v in elems:
            cand = basis + [v]
            if gf2._rank_of_bitrows(cand) == len(cand):
                rec(cand)

    rec([])
    if dim == 0:
        return [gf2.Subspace.zero(S.ambient_dim)]
    return list(seen.values())


class TestSubspaceStats:
    def test_formulas_against_exhaustive_enumeration(self):
        # ambient 5, d1 = 4, d2 = 2: count the subspace set directly
        rng = np.random.default_rng(3)
        full = gf2.Subspace(5, tuple(1 << i for i in range(5)))
        S = gf2.sample_subspace(full, 4, rng)
        subs = enumerate_subspaces_of(S, 2)
        v = S.basis[0]
        frac_member = sum(T.contains_bits(v) for T in subs) / len(subs)
        assert abs(frac_member - (2**2 - 1) / (2**4 - 1)) < 1e-12
        dualS = games._dual_of_span(S)
        u = next(
            x for x in range(1, 32) if not dualS.contains_bits(x)
        )
        frac_perp = sum(
            all((u & b).bit_count() % 2 == 0 for b in T.basis) for T in subs
        ) / len(subs)
        assert abs(frac_perp - (2 ** (4 - 2) - 1) / (2**4 - 1)) < 1e-12

    def test_sampled_statistics_within_3_sigma(self):
        rep = subspace_stats(2, 1, 4, 30_000, 17)
        assert rep["membership_within_3sigma"]
        assert rep["oblivious_within_3sigma"]
        assert abs(rep["membership_expected"] - 1 / 3) < 1e-12
        rep = subspace_stats(4, 2, 5, 30_000, 19)
        assert abs(rep["oblivious_expected"] - 0.2) < 1e-12
        assert rep["membership_within_3sigma"]
        assert rep["oblivious_within_3sigma"]

    def test_equal_dims_are_deterministic(self):
        rep = subspace_stats(3, 3, 6, 500, 23)
        assert rep["membership_frequency"] == 1.0
        assert rep["oblivious_frequency"] == 0.0

    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            subspace_stats(3, 4, 6, 10, 0)
        with pytest.raises(ValueError):
            subspace_stats(5, 2, 13, 10, 0)


class TestStructural:
    def test_oneshot_partition(self, game_inst):
        rep = oneshot_structural_check(game_inst)
        assert rep["overlapping_signature_sets"] == 0
        assert rep["non_partitioning_keys"] == 0
        assert rep["keys"] == 16
