"""Key-fire scheme tests: signing, cloning, per-iteration lemma, probes.

Unit tests run the truncated signing loop at small depth (the error budget
6*t2*2^-j scales accordingly); the full default-depth runs live in the
acceptance suite.
"""

import numpy as np
import pytest

from flamelab import keyfire as kfm, oss, sim
from flamelab.oracles import (
    KeyFireParams,
    OssParams,
    bottom_encode,
    derive_rng,
    gen_keyfire_oracles,
)
from flamelab.sim import RegisterLayout


def all_good_instance(params=None, start=0):
    params = params or KeyFireParams(OssParams(4, 2, 4), 3, 3, 4)
    for seed in range(start, start + 200):
        inst = gen_keyfire_oracles(params, seed)
        if len(inst.oss.good_vk_set()) == 1 << params.oss.r:
            return inst
    raise RuntimeError("no all-good instance found")


@pytest.fixture(scope="module")
def inst():
    return all_good_instance()


@pytest.fixture(scope="module")
def flame(inst):
    return oss.gen_qkey_purified(inst.oss)


class TestSetup:
    def test_setup_returns_instance_and_flame(self):
        kf = KeyFireParams(OssParams(4, 2, 4), 3, 3, 4)
        instance, flame = kfm.setup(kf, 21)
        assert abs(flame.aux_zero_weight() - 1) < 1e-12
        assert flame.state.support_size == 16
        instance2, flame2 = kfm.setup(kf, 21)
        assert np.all(instance2.Hsig.table == instance.Hsig.table)
        assert abs(sim.overlap(flame.state, flame2.state) - 1) < 1e-12


class TestKfVerify:
    def test_table_pairs_accept(self, inst):
        for m in range(16):
            assert kfm.kf_verify(inst, m, inst.Hsig.value(m))

    def test_single_bit_tampers_reject(self, inst):
        for m in range(16):
            sig = inst.Hsig.value(m)
            for bit in range(3):
                assert not kfm.kf_verify(inst, m, sig ^ (1 << bit))

    def test_random_signature_acceptance_count(self, inst):
        # exactly one accepted signature value per message
        accepted = sum(
            kfm.kf_verify(inst, m, y) for m in range(16) for y in range(8)
        )
        assert accepted == 16


class TestKfSign:
    def test_signature_equals_table(self, inst, flame):
        j = 8
        for m in (0, 5, 15):
            out = kfm.kf_sign(inst, flame.copy(), m, derive_rng(3, "s", m), j_max=j)
            assert out.ok, out.reason
            assert out.sig == inst.Hsig.value(m)
            assert kfm.kf_verify(inst, m, out.sig)
            assert out.key_fidelity >= 1 - 4 * 2.0**-j

    def test_attestations_match_tables(self, inst, flame):
        m = 9
        out = kfm.kf_sign(inst, flame.copy(), m, derive_rng(4, "t"), j_max=8)
        assert out.ok
        r = inst.oss.params.r
        assert out.y0 == inst.H0.value(out.ivk | (m << r))
        assert out.y1 == inst.H1.value(out.ivk | (m << r))

    def test_message_range_checked(self, inst, flame):
        with pytest.raises(ValueError):
            kfm.kf_sign(inst, flame.copy(), 1 << 4, derive_rng(0, "x"))


class TestAttestationProbe:
    def test_probe_matches_tables_and_unlocks(self, inst, flame):
        rng = derive_rng(11, "probe")
        r = inst.oss.params.r
        j = 8
        for i in range(10):
            z = int(rng.integers(0, 1 << inst.kf_params.p2))
            rep = kfm.attestation_probe(inst, flame.copy(), z, rng, j_max=j)
            assert rep["ok"]
            idx = rep["ivk"] | (z << r)
            assert rep["y0"] == inst.H0.value(idx)
            assert rep["y1"] == inst.H1.value(idx)
            assert rep["o2_unlocked"] == (inst.oss.dispatch.eval(z) != 0)
            assert rep["flame_fidelity"] >= 1 - 4 * 2.0**-j


class TestClone:
    def test_exact_mode_is_perfect(self, inst, flame):
        res = kfm.kf_clone(inst, flame, exact_sign=True)
        assert kfm.clone_fidelity(inst, flame, res) > 1 - 1e-12
        assert res.ancilla_zero_weight() > 1 - 1e-12
        assert res.peak_support <= 2 ** (2 * 4)

    def test_truncated_mode_meets_budget(self, inst, flame):
        j = 6
        res = kfm.kf_clone(inst, flame, j_max=j)
        fid = kfm.clone_fidelity(inst, flame, res)
        assert fid >= 1 - 16 * 2 * 2.0**-j
        assert res.ancilla_zero_weight() >= 1 - 16 * 2 * 2.0**-j

    def test_oracle_replacement_equivalence(self, inst):
        rep = kfm.oracle_replacement_check(inst, j_max=6)
        assert rep["deficit"] <= 6 * kfm.T2 * 2.0**-6
        rep_exact = kfm.oracle_replacement_check(inst, exact_sign=True)
        assert rep_exact["deficit"] < 1e-9

    def test_direct_mode_reproduces_flame_pair(self, inst, flame):
        res = kfm.kf_clone(inst, flame, oracle_mode="direct")
        assert kfm.clone_fidelity(inst, flame, res) > 1 - 1e-12

    def test_unknown_mode_rejected(self, inst, flame):
        with pytest.raises(ValueError):
            kfm.kf_clone(inst, flame, oracle_mode="bogus")

    def test_copies_project_onto_flame(self, inst, flame):
        res = kfm.kf_clone(inst, flame, j_max=6)
        prob_src, copy = kfm.clone_copies(inst, res)
        assert prob_src >= 1 - 16 * 2 * 2.0**-6
        ideal = oss.flame_reference_state(inst.oss)
        assert sim.fidelity(copy.state, ideal) >= 1 - 16 * 2 * 2.0**-6
        prob_clone, source = kfm.extract_source_copy(inst, res)
        assert prob_clone >= 1 - 16 * 2 * 2.0**-6
        assert sim.fidelity(source.state, ideal) >= 1 - 16 * 2 * 2.0**-6

    def test_chain_exact_mode(self, inst):
        rep = kfm.clone_chain(inst, depth=2, exact_sign=True)
        for step in rep["steps"]:
            assert step["source_projective_fidelity"] > 1 - 1e-9
            assert step["product_fidelity"] > 1 - 1e-9
        assert rep["final_copy_fidelity"] > 1 - 1e-9


class TestIterationLemma:
    def test_zero_state_deficit(self, inst):
        j = 6
        rep = kfm.clone_iteration_check(inst, j_max=j)
        assert rep["deficit"] <= 6 * 2.0**-j + 1e-8

    def test_exact_mode_deficit(self, inst):
        rep = kfm.clone_iteration_check(inst, exact_sign=True)
        assert rep["deficit"] < 1e-9

    def test_sweep_assembly_matches_direct_run(self, inst):
        # linearity: superposed basis-label runs equal the direct evolution
        j = 4
        rng = derive_rng(9, "lin")
        lay = RegisterLayout(oss.flame_reg_spec(inst.oss.params, prefix="c_"))
        pool = [int(x) for x in rng.choice(1 << lay.total_width, 4, replace=False)]
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        c /= np.linalg.norm(c)
        zeta = sim.superpose(
            [sim.state_from_amplitudes(lay, [(l, 1.0)]) for l in pool], c
        )
        direct = kfm.clone_iteration_check(inst, zeta=zeta, j_max=j)
        flame = oss.gen_qkey_purified(inst.oss)
        runs = [
            kfm._iteration_pair(
                inst, sim.state_from_amplitudes(lay, [(l, 1.0)]), flame, j, False
            )
            for l in pool
        ]
        actual = sim.superpose([r[0] for r in runs], c)
        ideal = sim.superpose([r[1] for r in runs], c)
        assembled = 1 - abs(sim.overlap(ideal, actual)) ** 2
        assert abs(direct["deficit"] - assembled) < 1e-10

    def test_sweep_reports(self, inst):
        j = 6
        rep = kfm.clone_iteration_sweep(
            inst, count=6, rng=derive_rng(2, "sw"), pool_size=5, support=3, j_max=j
        )
        assert len(rep["deficits"]) == 6
        assert rep["max_deficit"] <= 6 * 2.0**-j + 1e-8
        exact = kfm.clone_iteration_sweep(
            inst, count=6, rng=derive_rng(2, "sw"), pool_size=5, support=3,
            j_max=j, exact_sign=True,
        )
        assert exact["max_deficit"] < 1e-9

    def test_wrong_layout_rejected(self, inst):
        bad = sim.init_state(RegisterLayout([("zz", 4)]))
        with pytest.raises(ValueError):
            kfm.clone_iteration_check(inst, zeta=bad)


class TestAttestationFactoring:
    def test_output_independent_of_signature_branch(self, inst):
        rep = kfm.attestation_factoring_check(inst, j_max=6)
        assert rep["violations"] == 0
        assert rep["groups"] > 0
        assert rep["attestation_values_match_table"]


class TestInversionRoundTrips:
    def test_blocks_invert(self, inst):
        rep = kfm.inversion_roundtrips(inst, count=12, rng=derive_rng(8, "inv"), j_max=5)
        assert rep["worst_error"] < 1e-9


class TestConditioning:
    def test_good_vk_projection(self):
        # find an instance with at least one bad key
        for seed in range(200):
            inst = gen_keyfire_oracles(KeyFireParams(OssParams(4, 2, 4), 3, 3, 4), seed)
            good = inst.oss.good_vk_set()
            if 0 < len(good) < 4:
                break
        else:
            pytest.skip("no mixed instance found")
        flame = oss.gen_qkey_purified(inst.oss)
        weight, conditioned = kfm.condition_flame_good_vk(flame, inst)
        assert abs(weight - len(good) / 4) < 1e-12
        vks = {
            int(conditioned.state.layout.extract(np.array([l]), "vk")[0])
            for l in conditioned.state.labels
        }
        assert vks == set(good)

    def test_conditioned_clone_meets_budget(self):
        for seed in range(200):
            inst = gen_keyfire_oracles(KeyFireParams(OssParams(4, 2, 4), 3, 3, 4), seed)
            good = inst.oss.good_vk_set()
            if 0 < len(good) < 4:
                break
        else:
            pytest.skip("no mixed instance found")
        j = 6
        flame = oss.gen_qkey_purified(inst.oss)
        _, conditioned = kfm.condition_flame_good_vk(flame, inst)
        res = kfm.kf_clone(inst, conditioned, j_max=j)
        fid = kfm.clone_fidelity(inst, conditioned, res)
        assert fid >= 1 - 16 * 2 * 2.0**-j
