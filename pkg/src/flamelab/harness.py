"""Experiment drivers behind the CLI: seeded, threaded, reproducible.

Every command derives all randomness from (seed, role, trial-index) streams,
aggregates per-trial records in index order, and scores the results against
the configured thresholds; reports are bit-identical across reruns of the
same configuration, including with thread-level trial parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import games, keyfire as kfm, oss
from .oracles import (
    KeyFireInstance,
    OssParams,
    audit_keyfire_gating,
    audit_oss_instance,
    bottom_decode,
    derive_rng,
    gen_keyfire_oracles,
    gen_oss_oracles,
    load_instance,
    save_instance,
)
from .reports import (
    Check,
    ExperimentConfig,
    ExperimentReport,
    check_eq,
    check_ge,
    check_le,
)

GAME_OSS_PARAMS = OssParams(n=6, r=4, k=6)  # enough distinct keys for forwarders


def _map_trials(fn: Callable[[int], dict], trials: int, threads: int) -> List[dict]:
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def acquire_instance(config: ExperimentConfig) -> Tuple[KeyFireInstance, dict]:
    """Load or sample the key-fire instance; optionally rejection-sample the
    seed until every verification key is good (zero bad-key mass)."""
    meta: Dict[str, object] = {}
    if config.instance_path:
        inst = load_instance(config.instance_path)
        if not isinstance(inst, KeyFireInstance):
            raise ValueError("experiment needs a key-fire instance file")
        meta["source"] = "file"
        meta["all_vk_good"] = len(inst.oss.good_vk_set()) == (1 << inst.oss.params.r)
        return inst, meta
    kf_params = config.keyfire_params()
    attempt = 0
    while True:
        seed = int(derive_rng(config.seed, "instance", attempt).integers(0, 1 << 62))
        inst = gen_keyfire_oracles(kf_params, seed)
        good = len(inst.oss.good_vk_set())
        if not config.require_good_vk_instance or good == (1 << kf_params.oss.r):
            meta.update({
                "source": "sampled",
                "instance_seed": seed,
                "seed_scan_attempts": attempt + 1,
                "good_vk_count": good,
                "all_vk_good": good == (1 << kf_params.oss.r),
            })
            return inst, meta
        attempt += 1
        if attempt > 1000:
            raise RuntimeError("no all-good instance found in 1000 attempts")


# ---------------------------------------------------------------------------
# oss-correctness
# ---------------------------------------------------------------------------

def cmd_oss_correctness(config: ExperimentConfig) -> ExperimentReport:
    """Key generation, signing and verification statistics, plus the exact
    coherent/measured signing-distribution comparison."""
    kf_inst, inst_meta = acquire_instance(config)
    inst = kf_inst.oss
    j = config.params["j_max"]
    flame = oss.gen_qkey_purified(inst)

    def one_trial(t: int) -> dict:
        rng = derive_rng(config.seed, "oss-trial", t)
        key = oss.gen_qkey(inst, rng, flame=flame)
        m = int(rng.integers(2))
        trace: dict = {}
        sig = oss.sign(inst, key, m, j_max=j, rng=rng, trace=trace)
        rec = {
            "vk": key.vk,
            "m": m,
            "good": inst.good_vk(key.vk),
            "possible": len(oss.enumerate_signatures(inst, key.vk, m)) > 0,
            "success": sig is not None,
            "iteration": trace.get("iteration", 0),
            "key_outcome": trace.get("key"),
        }
        rec["verified"] = bool(sig is not None and oss.verify(inst, key.vk, m, sig))
        return rec

    records = _map_trials(one_trial, config.trials, config.threads)

    def rate(pred) -> Tuple[int, int]:
        sel = [r for r in records if pred(r)]
        return sum(r["success"] for r in sel), len(sel)

    good_succ, good_n = rate(lambda r: r["good"])
    badpos_succ, badpos_n = rate(lambda r: not r["good"] and r["possible"])
    badimp_succ, badimp_n = rate(lambda r: not r["good"] and not r["possible"])
    verify_failures = sum(1 for r in records if r["success"] and not r["verified"])

    p_exp = 1.0 - 2.0 ** (-j)
    sigma = math.sqrt(max(p_exp * (1 - p_exp), 0.25 / config.trials) / max(good_n, 1))
    good_rate = good_succ / good_n if good_n else 0.0

    # deferred-measurement equivalence: exact joint distributions per key/message
    tv_rows = []
    for vk in range(1 << inst.params.r):
        for m in (0, 1):
            dc = oss.coherent_sign_distribution(inst, vk, m, j)
            dm = oss.measured_sign_distribution(inst, vk, m, j)
            tv_rows.append({"vk": vk, "m": m, "tv": oss.total_variation(dc, dm)})
    max_tv = max(r["tv"] for r in tv_rows)

    # empirical joint outcomes for m=0 trials against the exact mixture
    empirical: Dict[Tuple[int, int, int], float] = {}
    n0 = 0
    for r in records:
        if r["m"] == 0:
            n0 += 1
            kk = (r["vk"], r["iteration"], r["key_outcome"])
            empirical[kk] = empirical.get(kk, 0.0) + 1.0
    emp_tv = None
    if n0:
        empirical = {k: v / n0 for k, v in empirical.items()}
        exact_mix: Dict[Tuple[int, int, int], float] = {}
        w = 2.0 ** (-inst.params.r)
        for vk in range(1 << inst.params.r):
            for (it, kv), p in oss.measured_sign_distribution(inst, vk, 0, j).items():
                exact_mix[(vk, it, kv)] = exact_mix.get((vk, it, kv), 0.0) + w * p
        emp_tv = oss.total_variation(empirical, exact_mix)

    results = {
        "instance": inst_meta,
        "good_vk": {"trials": good_n, "successes": good_succ, "rate": good_rate},
        "bad_vk_possible": {"trials": badpos_n, "successes": badpos_succ},
        "bad_vk_impossible": {"trials": badimp_n, "successes": badimp_succ},
        "verify_failures": verify_failures,
        "sign_equivalence": {
            "per_key_tv": tv_rows,
            "max_exact_tv": max_tv,
            "empirical_tv_m0": emp_tv,
            "empirical_trials_m0": n0,
        },
    }
    th = config.thresholds
    checks = [
        check_ge(
            "good_vk_success_rate",
            good_rate,
            1.0 - th["sign_failure_bound"] - th["sigma_factor"] * sigma,
        ),
        check_le("returned_signature_verify_failures", verify_failures,
                 th["verify_failures_allowed"]),
        check_le("sign_equivalence_max_exact_tv", max_tv, th["sign_equivalence_tv"]),
    ]
    if j == 1:
        checks.append(
            check_le("per_iteration_half_deviation", abs(good_rate - 0.5),
                     th["sigma_factor"] * sigma)
        )
    if badimp_n:
        checks.append(check_eq("impossible_message_successes", badimp_succ, 0))
    return ExperimentReport(config=config, results=results, checks=checks)


# ---------------------------------------------------------------------------
# clone-fidelity
# ---------------------------------------------------------------------------

def cmd_clone_fidelity(config: ExperimentConfig) -> ExperimentReport:
    """Clone-fidelity budget, chain cloning, per-iteration lemma sweep and
    unitarity round trips."""
    inst, inst_meta = acquire_instance(config)
    j = config.params["j_max"]
    depth = int(config.thresholds.get("chain_depth", 3))

    chain = kfm.clone_chain(
        inst, depth=depth, j_max=j,
        exact_sign=config.exact_sign,
        condition_good_vk=config.condition_good_vk,
    )
    flame = oss.gen_qkey_purified(inst.oss)
    if config.condition_good_vk:
        _, flame = kfm.condition_flame_good_vk(flame, inst)
    exact_res = kfm.kf_clone(inst, flame, j_max=j, exact_sign=True)
    exact_fid = kfm.clone_fidelity(inst, flame, exact_res)

    sweep = kfm.clone_iteration_sweep(
        inst, count=config.trials, rng=derive_rng(config.seed, "sweep"),
        pool_size=8, support=4, j_max=j,
        condition_good_vk=config.condition_good_vk,
    )
    exact_sweep = kfm.clone_iteration_sweep(
        inst, count=config.trials, rng=derive_rng(config.seed, "sweep"),
        pool_size=8, support=4, j_max=j, exact_sign=True,
        condition_good_vk=config.condition_good_vk,
    )
    inversion = kfm.inversion_roundtrips(
        inst, count=50, rng=derive_rng(config.seed, "inversion"), j_max=j
    )

    step1 = chain["steps"][0]
    results = {
        "instance": inst_meta,
        "clone_fidelity": step1["product_fidelity"],
        "ancilla_zero_weight": step1["ancilla_zero_weight"],
        "exact_clone_fidelity": exact_fid,
        "chain": chain,
        "iteration_sweep": sweep,
        "exact_iteration_sweep": exact_sweep,
        "inversion": inversion,
    }
    th = config.thresholds
    chain_fids = [s["source_projective_fidelity"] for s in chain["steps"]]
    chain_fids.append(chain["final_copy_fidelity"])
    checks = [
        check_ge("clone_product_fidelity", step1["product_fidelity"], th["clone_fidelity"]),
        check_ge("ancilla_zero_weight", step1["ancilla_zero_weight"], th["clone_fidelity"]),
        check_ge("exact_clone_fidelity", exact_fid, th["exact_clone_fidelity"]),
        check_ge(
            f"chain_depth{depth}_min_copy_fidelity",
            min(chain_fids),
            th["chain_copy_fidelity"],
        ),
        check_le("iteration_sweep_max_deficit", sweep["max_deficit"],
                 th["iteration_deficit"]),
        check_le("exact_iteration_sweep_max_deficit", exact_sweep["max_deficit"],
                 th["exact_iteration_deficit"]),
        check_le("inversion_worst_error", inversion["worst_error"],
                 th["inversion_overlap_error"]),
    ]
    return ExperimentReport(config=config, results=results, checks=checks)


# ---------------------------------------------------------------------------
# keyfire-endtoend
# ---------------------------------------------------------------------------

def cmd_keyfire_endtoend(config: ExperimentConfig) -> ExperimentReport:
    """Setup, clone, sign every message with both copies, verify, tamper."""
    inst, inst_meta = acquire_instance(config)
    kf = inst.kf_params
    j = config.params["j_max"]
    flame = oss.gen_qkey_purified(inst.oss)
    if config.condition_good_vk:
        _, flame = kfm.condition_flame_good_vk(flame, inst)
    res = kfm.kf_clone(inst, flame, j_max=j, exact_sign=config.exact_sign)
    rows = []
    sign_failures = 0
    mismatches = 0
    verify_failures = 0
    for m in range(1 << kf.msg_width):
        for side in ("source", "clone"):
            if side == "source":
                _, copy = kfm.extract_source_copy(inst, res)
            else:
                _, copy = kfm.clone_copies(inst, res)
            rng = derive_rng(config.seed, "kf-sign", m, 0 if side == "source" else 1)
            out = kfm.kf_sign(inst, copy, m, rng, j_max=j)
            expected = inst.Hsig.value(m)
            row = {
                "m": m,
                "side": side,
                "ok": out.ok,
                "ivk": out.ivk,
                "ivk_good": inst.oss.good_vk(out.ivk),
                "sig": out.sig,
                "expected": expected,
                "key_fidelity_after": out.key_fidelity,
            }
            if not out.ok:
                sign_failures += 1
                row["reason"] = out.reason
            else:
                if out.sig != expected:
                    mismatches += 1
                if not kfm.kf_verify(inst, m, out.sig):
                    verify_failures += 1
            rows.append(row)
    tamper_accepts = 0
    for m in range(1 << kf.msg_width):
        sig = inst.Hsig.value(m)
        for bit in range(kf.sig_width):
            if kfm.kf_verify(inst, m, sig ^ (1 << bit)):
                tamper_accepts += 1
    results = {
        "instance": inst_meta,
        "messages": 1 << kf.msg_width,
        "signs": rows,
        "sign_failures": sign_failures,
        "signature_mismatches": mismatches,
        "verify_failures": verify_failures,
        "tamper_acceptances": tamper_accepts,
        "clone_peak_support": res.peak_support,
    }
    th = config.thresholds
    checks = [
        check_eq("sign_failures", sign_failures, 0),
        check_le("signature_mismatches", mismatches, th["signature_mismatches_allowed"]),
        check_eq("verify_failures", verify_failures, 0),
        check_le("tamper_acceptances", tamper_accepts, th["tamper_acceptances_allowed"]),
    ]
    return ExperimentReport(config=config, results=results, checks=checks)


# ---------------------------------------------------------------------------
# games
# ---------------------------------------------------------------------------

def cmd_games(config: ExperimentConfig) -> ExperimentReport:
    """Subspace statistics, incompressibility games, random-oracle games,
    query-weight estimation and the one-shot structural sweep."""
    seed = config.seed
    game_inst = gen_oss_oracles(
        GAME_OSS_PARAMS, int(derive_rng(seed, "game-instance").integers(0, 1 << 62))
    )
    sub_trials = config.trials
    subspace = [
        games.subspace_stats(2, 1, 4, sub_trials, derive_rng(seed, "sub", 0)),
        games.subspace_stats(4, 2, 5, sub_trials, derive_rng(seed, "sub", 1)),
    ]

    forwarder = games.run_oss_incompressibility(
        game_inst, games.honest_forwarder_script(5), 3, derive_rng(seed, "fwd")
    )
    guesser = games.run_oss_incompressibility(
        game_inst, games.empty_leakage_guesser_script(400), 5, derive_rng(seed, "guess")
    )
    violator = games.run_oss_incompressibility(
        game_inst, games.violating_script(), 2, derive_rng(seed, "viol")
    )
    p = game_inst.params
    guess_rate_expected = 2.0 ** (p.n - p.r - 1) / 2.0**p.k
    guess_total = sum(t["valid_outputs"] for t in guesser["trials"])
    guess_n = 5 * 400
    guess_rate = guess_total / guess_n
    guess_sigma = math.sqrt(guess_rate_expected * (1 - guess_rate_expected) / guess_n)

    rom_fwd = games.run_rom_incompressibility(
        8, 6, games.honest_rom_forwarder_script(7), 3, derive_rng(seed, "rom-fwd")
    )
    rom_guess = games.run_rom_incompressibility(
        6, 5, games.rom_guesser_script(200), 5, derive_rng(seed, "rom-guess")
    )
    rom_section = games.run_rom_incompressibility(
        8, 6, games.rom_section_only_script(5), 2, derive_rng(seed, "rom-sec")
    )
    rom_viol = games.run_rom_incompressibility(
        8, 6, games.rom_violating_script(), 1, derive_rng(seed, "rom-viol")
    )
    rom_guess_hits = sum(t["distinct_valid_outside"] for t in rom_guess["trials"])
    rom_guess_expected = 5 * 200 * 2.0 ** (-5)
    rom_guess_sigma = math.sqrt(5 * 200 * 2.0 ** (-5) * (1 - 2.0 ** (-5)))

    qw_oracle = game_inst.D
    qw_point = games.estimate_query_weight(
        games.point_query_program(qw_oracle, 5), lambda x: x == 5,
        256, derive_rng(seed, "qw", 0), predicate_name="x==5",
    )
    qw_uniform = games.estimate_query_weight(
        games.uniform_query_program(qw_oracle, 2), lambda x: True,
        8192, derive_rng(seed, "qw", 1), predicate_name="any",
    )
    qw_never = games.estimate_query_weight(
        games.point_query_program(qw_oracle, 5), lambda x: False,
        256, derive_rng(seed, "qw", 2), predicate_name="never",
    )
    structural = games.oneshot_structural_check(game_inst)

    results = {
        "game_params": {"n": p.n, "r": p.r, "k": p.k},
        "subspace": subspace,
        "oss_incompressibility": {
            "honest_forwarder": forwarder,
            "empty_leakage_guesser": {
                "report": guesser,
                "rate": guess_rate,
                "expected": guess_rate_expected,
            },
            "violator": violator,
        },
        "rom_incompressibility": {
            "honest_forwarder": rom_fwd,
            "guesser": {
                "report": rom_guess,
                "hits": rom_guess_hits,
                "expected": rom_guess_expected,
            },
            "section_only": rom_section,
            "violator": rom_viol,
        },
        "query_weight": {
            "point": {"weights": {str(k): v for k, v in qw_point.weights.items()}},
            "uniform4": {"weights": {str(k): v for k, v in qw_uniform.weights.items()}},
            "never": {"weights": {str(k): v for k, v in qw_never.weights.items()}},
        },
        "oneshot_structural": structural,
    }
    sf = config.thresholds["sigma_factor"]
    checks: List[Check] = []
    for i, rep in enumerate(subspace):
        checks.append(check_le(
            f"subspace_{rep['d1']}_{rep['d2']}_membership_dev",
            abs(rep["membership_frequency"] - rep["membership_expected"]),
            sf * math.sqrt(max(rep["membership_expected"]
                               * (1 - rep["membership_expected"]), 1e-12)
                           / rep["trials"]) + 1e-12,
        ))
        checks.append(check_le(
            f"subspace_{rep['d1']}_{rep['d2']}_oblivious_dev",
            abs(rep["oblivious_frequency"] - rep["oblivious_expected"]),
            sf * math.sqrt(max(rep["oblivious_expected"]
                               * (1 - rep["oblivious_expected"]), 1e-12)
                           / rep["trials"]) + 1e-12,
        ))
    fwd_ok = all(
        t["distinct_valid_vk"] == 5 and t["within_bound"] and not t["violation"]
        for t in forwarder["trials"]
    )
    checks.append(check_eq("honest_forwarder_exact_count", fwd_ok, True))
    checks.append(check_eq(
        "oss_restriction_violations_detected",
        all(t["violation"] for t in violator["trials"]), True,
    ))
    checks.append(check_le(
        "empty_guesser_rate_deviation", abs(guess_rate - guess_rate_expected),
        sf * guess_sigma + 1e-12,
    ))
    rom_fwd_ok = all(
        t["distinct_valid_outside"] == t["stage1_query_budget"] == 7
        for t in rom_fwd["trials"]
    )
    checks.append(check_eq("rom_forwarder_exact_count", rom_fwd_ok, True))
    checks.append(check_eq(
        "rom_restriction_violations_detected",
        all(t["violation"] for t in rom_viol["trials"]), True,
    ))
    checks.append(check_le(
        "rom_guesser_hits_deviation", abs(rom_guess_hits - rom_guess_expected),
        sf * rom_guess_sigma + 1e-12,
    ))
    sec_ok = all(
        t["distinct_valid_outside"] == 0 and t["valid_inside_excluded"] == 5
        for t in rom_section["trials"]
    )
    checks.append(check_eq("rom_section_pairs_excluded", sec_ok, True))
    checks.append(check_eq("query_weight_point_exact", qw_point.weights == {5: 1.0}, True))
    checks.append(check_eq("query_weight_never_empty", qw_never.weights == {}, True))
    qw_dev = max(abs(w - 0.25) for w in qw_uniform.weights.values())
    checks.append(check_le(
        "query_weight_uniform_deviation", qw_dev,
        sf * math.sqrt(0.25 * 0.75 / 8192) + 1e-12,
    ))
    checks.append(check_eq(
        "oneshot_structural_clean",
        structural["overlapping_signature_sets"] + structural["non_partitioning_keys"],
        0,
    ))
    return ExperimentReport(config=config, results=results, checks=checks)


# ---------------------------------------------------------------------------
# instance
# ---------------------------------------------------------------------------

def cmd_instance(config: ExperimentConfig, action: str, path: str) -> ExperimentReport:
    """Persistence round trip and exhaustive oracle audits."""
    results: dict = {"action": action, "path": path}
    checks: List[Check] = []
    if action == "save":
        inst, inst_meta = acquire_instance(config)
        results["instance"] = inst_meta
        save_instance(inst, path)
        first = open(path, "rb").read()
        save_instance(inst, path)
        second = open(path, "rb").read()
        results["bytes"] = len(second)
        checks.append(check_eq("double_save_byte_identical", first == second, True))
        reloaded = load_instance(path)
        checks.append(check_eq(
            "round_trip_regenerates_secrets",
            bool(np.all(reloaded.oss.pi.table == inst.oss.pi.table))
            and reloaded.oss.b == inst.oss.b
            and all(
                a.columns == b.columns for a, b in zip(reloaded.oss.A, inst.oss.A)
            ),
            True,
        ))
        inst_for_audit = reloaded
    elif action in ("load", "audit"):
        if action == "load" or config.instance_path or path:
            inst_for_audit = load_instance(path or config.instance_path)
            results["instance"] = {"source": "file"}
        else:
            inst_for_audit, inst_meta = acquire_instance(config)
            results["instance"] = inst_meta
    else:
        raise ValueError(f"unknown instance action {action!r}")
    oss_inst = inst_for_audit.oss if isinstance(inst_for_audit, KeyFireInstance) else inst_for_audit
    failures = audit_oss_instance(oss_inst)
    results["oss_audit_failures"] = failures
    checks.append(check_eq("oss_audit_clean", len(failures), 0))
    if isinstance(inst_for_audit, KeyFireInstance):
        gate_failures = audit_keyfire_gating(inst_for_audit)
        results["gating_audit_failures"] = gate_failures
        checks.append(check_eq("keyfire_gating_audit_clean", len(gate_failures), 0))
    return ExperimentReport(config=config, results=results, checks=checks)
