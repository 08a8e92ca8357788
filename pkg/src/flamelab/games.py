"""Executable security-game machinery with scripted adversaries.

Covers the desk-scale-meaningful games: query-weight estimation by measuring
a uniformly random query, the two-stage incompressibility game with a
restricted second stage, the random-oracle incompressibility experiment with
image-verification and section oracles, and subspace-sampling statistics.

Scripts are in-repo strategy objects; a gateway mediates every oracle call,
counts queries and enforces the stage-2 restriction set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import gf2, oss, sim
from .oracles import ClassicalOracle, OssInstance, RandomFunction, derive_rng, seed_from
from .oss import GENQKEY_QUERIES
from .sim import Operation, RegisterLayout, apply_op, binding, init_state


class RestrictionViolation(RuntimeError):
    """A stage-2 script evaluated an oracle outside its declared set."""


# ---------------------------------------------------------------------------
# Query-weight estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryStep:
    """A quantum oracle query inside a program."""

    oracle: ClassicalOracle
    input_regs: tuple
    output_regs: tuple


@dataclass
class QueryProgram:
    """Straight-line quantum program with marked oracle queries."""

    layout: RegisterLayout
    steps: List[object]  # Operation or QueryStep
    declared_queries: int

    def query_count(self) -> int:
        return sum(1 for s in self.steps if isinstance(s, QueryStep))


@dataclass
class QueryWeightReport:
    weights: Dict[int, float]
    samples: int
    query_count: int
    predicate: str

    def total_weight(self) -> float:
        return sum(self.weights.values())


def estimate_query_weight(
    program: QueryProgram,
    predicate: Callable[[int], bool],
    samples: int,
    rng: np.random.Generator,
    predicate_name: str = "predicate",
) -> QueryWeightReport:
    """Measure a uniformly random query's input register across many runs.

    The empirical frequency of each measured input, scaled by the query
    count, estimates the total squared amplitude the program places on it.
    """
    total = program.query_count()
    if total != program.declared_queries:
        raise ValueError(
            f"program declares {program.declared_queries} queries, has {total}"
        )
    if total == 0:
        raise ValueError("program makes no queries")
    counts: Dict[int, int] = {}
    for _ in range(samples):
        ind = int(rng.integers(total))
        state = init_state(program.layout)
        seen = 0
        for step in program.steps:
            if isinstance(step, QueryStep):
                if seen == ind:
                    x = 0
                    shift = 0
                    for reg in step.input_regs:
                        x |= sim.measure(state, reg, rng) << shift
                        shift += program.layout.width(reg)
                    if predicate(x):
                        counts[x] = counts.get(x, 0) + 1
                    break
                apply_op(state, sim.OracleXor(
                    binding(step.oracle, step.input_regs, step.output_regs)))
                seen += 1
            else:
                apply_op(state, step)
    weights = {x: c * total / samples for x, c in sorted(counts.items())}
    return QueryWeightReport(
        weights=weights, samples=samples, query_count=total, predicate=predicate_name
    )


def point_query_program(oracle: ClassicalOracle, x0: int) -> QueryProgram:
    lay = RegisterLayout([("qin", oracle.in_width), ("qout", oracle.out_width)])
    steps: List[object] = []
    if x0:
        steps.append(sim.XFlip("qin", tuple(i for i in range(oracle.in_width) if (x0 >> i) & 1)))
    steps.append(QueryStep(oracle, ("qin",), ("qout",)))
    return QueryProgram(layout=lay, steps=steps, declared_queries=1)


def uniform_query_program(oracle: ClassicalOracle, width: Optional[int] = None) -> QueryProgram:
    """Query a uniform superposition over the low ``width`` input bits."""
    w = oracle.in_width if width is None else width
    if not 1 <= w <= oracle.in_width:
        raise ValueError("width out of range")
    if w == oracle.in_width:
        lay = RegisterLayout([("qin", w), ("qout", oracle.out_width)])
        steps: List[object] = [sim.Hadamard("qin"), QueryStep(oracle, ("qin",), ("qout",))]
    else:
        lay = RegisterLayout(
            [("qin", w), ("qpad", oracle.in_width - w), ("qout", oracle.out_width)]
        )
        steps = [sim.Hadamard("qin"), QueryStep(oracle, ("qin", "qpad"), ("qout",))]
    return QueryProgram(layout=lay, steps=steps, declared_queries=1)


# ---------------------------------------------------------------------------
# Two-stage OSS incompressibility game
# ---------------------------------------------------------------------------

STAGE1_ORACLES = frozenset({"p", "pinv", "d", "d0", "genqkey", "sign", "ver"})
STAGE2_ORACLES = frozenset({"sign", "ver"})


class OracleGateway:
    """Mediates classical oracle access, counting and restricting calls."""

    def __init__(self, instance: OssInstance, allowed: frozenset):
        self.instance = instance
        self.allowed = allowed
        self.counts: Dict[str, int] = {}
        self._map = {
            "p": instance.P,
            "pinv": instance.Pinv,
            "d": instance.D,
            "d0": instance.D0,
            "genqkey": instance.dispatch,
            "sign": instance.D,
            "ver": instance.D0,
        }

    def _charge(self, name: str, amount: int = 1) -> None:
        if name not in self.allowed:
            raise RestrictionViolation(f"oracle {name!r} is not in the allowed set")
        self.counts[name] = self.counts.get(name, 0) + amount

    def call(self, name: str, x: int) -> int:
        self._charge(name)
        return self._map[name].eval(x)

    def gen_qkey(self, rng: np.random.Generator) -> oss.OssKey:
        """Quantum key generation; charged as its dispatch-oracle queries."""
        self._charge("genqkey", GENQKEY_QUERIES)
        return oss.gen_qkey(self.instance, rng)

    def sign_key(self, key: oss.OssKey, m: int, rng: np.random.Generator,
                 j_max: int = oss.DEFAULT_J_MAX) -> Optional[int]:
        """Quantum signing; each correction round queries the signing oracle."""
        trace: dict = {}
        sig = oss.sign(self.instance, key, m, j_max=j_max, rng=rng, trace=trace)
        rounds = trace.get("iteration") or j_max
        self._charge("sign", max(rounds - 1, 0) or 1)
        return sig

    def genqkey_queries(self) -> int:
        return self.counts.get("genqkey", 0)


@dataclass
class AdversaryScript:
    """Two-stage scripted adversary; both stages deterministic given rngs."""

    name: str
    stage1: Callable[[OracleGateway, np.random.Generator], object]
    stage2: Callable[[OracleGateway, object, np.random.Generator], List[Tuple[int, int]]]


def run_oss_incompressibility(
    instance: OssInstance,
    script: AdversaryScript,
    trials: int,
    rng_or_seed,
    restricted_oracle: str = "ver",
) -> dict:
    """Play the incompressibility game; stage 2 sees only signing/verification.

    Counts distinct verification keys among valid stage-2 outputs and
    compares them with twice the stage-1 key-generation query count (the
    construction's list size). The realized distinct-valid set is a witness
    lower bound, not the definition's existential list.
    """
    if restricted_oracle not in ("ver", "sign"):
        raise ValueError("restricted_oracle must be 'ver' or 'sign'")
    seed = seed_from(rng_or_seed)
    r = instance.params.r
    trial_records = []
    for t in range(trials):
        rng1 = derive_rng(seed, "stage1", t)
        rng2 = derive_rng(seed, "stage2", t)
        gw1 = OracleGateway(instance, STAGE1_ORACLES)
        leakage = script.stage1(gw1, rng1)
        gw2 = OracleGateway(instance, STAGE2_ORACLES)
        record = {
            "trial": t,
            "genqkey_queries": gw1.genqkey_queries(),
            "list_bound": 2 * gw1.genqkey_queries(),
            "violation": False,
        }
        try:
            outputs = script.stage2(gw2, leakage, rng2)
        except RestrictionViolation as e:
            record["violation"] = True
            record["violation_detail"] = str(e)
            record["distinct_valid_vk"] = 0
            record["valid_outputs"] = 0
            trial_records.append(record)
            continue
        oracle = instance.D0 if restricted_oracle == "ver" else instance.D
        x_width = oracle.in_width - r
        valid_vks = set()
        valid = 0
        for vk, x in outputs:
            # malformed outputs simply do not win
            if not (0 <= vk < (1 << r) and 0 <= x < (1 << x_width)):
                continue
            if oracle.eval(vk | (x << r)):
                valid += 1
                valid_vks.add(vk)
        record["valid_outputs"] = valid
        record["outputs"] = len(outputs)
        record["distinct_valid_vk"] = len(valid_vks)
        record["within_bound"] = len(valid_vks) <= record["list_bound"]
        trial_records.append(record)
    return {
        "script": script.name,
        "restricted_oracle": restricted_oracle,
        "trials": trial_records,
    }


def honest_forwarder_script(num_keys: int, j_max: int = oss.DEFAULT_J_MAX,
                            max_attempts: int = 200) -> AdversaryScript:
    """Generate keys until num_keys distinct verification keys hold message-0
    signatures; leak the (vk, signature) pairs; stage 2 forwards them."""

    def stage1(gw: OracleGateway, rng: np.random.Generator):
        found: Dict[int, int] = {}
        attempts = 0
        while len(found) < num_keys:
            attempts += 1
            if attempts > max_attempts:
                raise RuntimeError("could not collect enough signable keys")
            key = gw.gen_qkey(rng)
            if key.vk in found:
                continue
            sig = gw.sign_key(key, 0, rng, j_max=j_max)
            if sig is None:
                continue
            found[key.vk] = sig
        return sorted(found.items())

    def stage2(gw: OracleGateway, leakage, rng: np.random.Generator):
        # x for the verification oracle is message||signature
        return [(vk, (sig << 1) | 0) for vk, sig in leakage]

    return AdversaryScript("honest-forwarder", stage1, stage2)


def empty_leakage_guesser_script(num_guesses: int) -> AdversaryScript:
    """No leakage; stage 2 guesses uniform (vk, m, v) triples."""

    def stage1(gw, rng):
        return None

    def stage2(gw: OracleGateway, leakage, rng: np.random.Generator):
        params = gw.instance.params
        out = []
        for _ in range(num_guesses):
            vk = int(rng.integers(0, 1 << params.r))
            x = int(rng.integers(0, 1 << (1 + params.k)))
            out.append((vk, x))
        return out

    return AdversaryScript("empty-leakage-guesser", stage1, stage2)


def violating_script() -> AdversaryScript:
    """Stage 2 attempts a key-generation oracle call; must be rejected."""

    def stage1(gw, rng):
        return None

    def stage2(gw: OracleGateway, leakage, rng):
        gw.call("genqkey", 0)
        return []

    return AdversaryScript("restriction-violator", stage1, stage2)


# ---------------------------------------------------------------------------
# Random-oracle incompressibility experiment
# ---------------------------------------------------------------------------

class RomGateway:
    """Random function H with image-verification and section oracles."""

    def __init__(self, table: np.ndarray, g1: int, g2: int, stage: int,
                 predicates: Optional[List[Set[int]]] = None):
        self.table = table
        self.g1, self.g2 = g1, g2
        self.stage = stage
        self.predicates: List[Set[int]] = predicates if predicates is not None else []
        self.h_counts: List[int] = [0]
        self.ver_count = 0
        self.section_count = 0

    def h(self, x: int) -> int:
        if self.stage != 1:
            raise RestrictionViolation("direct H access is stage-1 only")
        self.h_counts[-1] += 1
        return int(self.table[x])

    def emit_predicate(self, pred: Set[int]) -> None:
        if self.stage != 1:
            raise RestrictionViolation("predicates are emitted in stage 1")
        self.predicates.append(set(pred))
        self.h_counts.append(0)

    def union_predicate(self) -> Set[int]:
        u: Set[int] = set()
        for p in self.predicates:
            u |= p
        return u

    def image_ver(self, x: int, y: int) -> int:
        self.ver_count += 1
        return int(self.table[x] == y)

    def section(self, x: int) -> Optional[int]:
        self.section_count += 1
        if x in self.union_predicate():
            return int(self.table[x])
        return None


@dataclass
class RomScript:
    name: str
    stage1: Callable[[RomGateway, np.random.Generator], object]
    stage2: Callable[[RomGateway, object, np.random.Generator], List[Tuple[int, int]]]


def run_rom_incompressibility(
    g1: int,
    g2: int,
    script: RomScript,
    trials: int,
    rng_or_seed,
) -> dict:
    """Count distinct valid (x, H(x)) stage-2 outputs outside the predicate
    union, against the total stage-1 direct-query budget."""
    if g1 > 20:
        raise ValueError("random-oracle domain exceeds the table guard")
    seed = seed_from(rng_or_seed)
    records = []
    for t in range(trials):
        table = derive_rng(seed, "rom-table", t).integers(
            0, 1 << g2, size=1 << g1, dtype=np.uint64
        )
        rng1 = derive_rng(seed, "rom-stage1", t)
        rng2 = derive_rng(seed, "rom-stage2", t)
        gw1 = RomGateway(table, g1, g2, stage=1)
        leakage = script.stage1(gw1, rng1)
        gw2 = RomGateway(table, g1, g2, stage=2, predicates=gw1.predicates)
        record = {
            "trial": t,
            "stage1_query_budget": sum(gw1.h_counts),
            "rounds": len(gw1.predicates),
            "violation": False,
        }
        try:
            outputs = script.stage2(gw2, leakage, rng2)
        except RestrictionViolation as e:
            record["violation"] = True
            record["violation_detail"] = str(e)
            records.append(record)
            continue
        union = gw2.union_predicate()
        valid_outside = {
            x for x, y in outputs if int(table[x]) == y and x not in union
        }
        inside = {x for x, y in outputs if int(table[x]) == y and x in union}
        record["distinct_valid_outside"] = len(valid_outside)
        record["valid_inside_excluded"] = len(inside)
        record["verification_queries"] = gw2.ver_count
        record["within_bound"] = len(valid_outside) <= record["stage1_query_budget"]
        records.append(record)
    return {"script": script.name, "g1": g1, "g2": g2, "trials": records}


def honest_rom_forwarder_script(points: int) -> RomScript:
    def stage1(gw: RomGateway, rng: np.random.Generator):
        xs = rng.choice(1 << gw.g1, size=points, replace=False)
        pairs = [(int(x), gw.h(int(x))) for x in xs]
        gw.emit_predicate(set())
        return pairs

    def stage2(gw, leakage, rng):
        return list(leakage)

    return RomScript("rom-honest-forwarder", stage1, stage2)


def rom_guesser_script(num_guesses: int) -> RomScript:
    def stage1(gw, rng):
        return None

    def stage2(gw: RomGateway, leakage, rng: np.random.Generator):
        out = []
        for _ in range(num_guesses):
            x = int(rng.integers(0, 1 << gw.g1))
            y = int(rng.integers(0, 1 << gw.g2))
            if gw.image_ver(x, y):
                out.append((x, y))
        return out

    return RomScript("rom-guesser", stage1, stage2)


def rom_section_only_script(points: int) -> RomScript:
    """Covers its own queries with a predicate; the section answers are valid
    pairs but fall inside the union, so the count excludes them."""

    def stage1(gw: RomGateway, rng: np.random.Generator):
        xs = [int(x) for x in rng.choice(1 << gw.g1, size=points, replace=False)]
        for x in xs:
            gw.h(x)
        gw.emit_predicate(set(xs))
        return xs

    def stage2(gw: RomGateway, leakage, rng):
        return [(x, gw.section(x)) for x in leakage]

    return RomScript("rom-section-only", stage1, stage2)


def rom_violating_script() -> RomScript:
    def stage1(gw, rng):
        return None

    def stage2(gw: RomGateway, leakage, rng):
        gw.h(0)
        return []

    return RomScript("rom-restriction-violator", stage1, stage2)


# ---------------------------------------------------------------------------
# Subspace statistics
# ---------------------------------------------------------------------------

def subspace_stats(
    d1: int,
    d2: int,
    ambient: int,
    trials: int,
    rng_or_seed,
) -> dict:
    """Frequencies for uniformly sampled d2-subspaces T of a d1-subspace S:

    (a) a fixed nonzero v in S lands in T with probability
        (2^d2 - 1)/(2^d1 - 1);
    (b) a fixed vector outside the dual of S is orthogonal to T (that is,
        lands in the dual of T but not of S) with probability
        (2^(d1-d2) - 1)/(2^d1 - 1) - the oblivious-adversary success rate.
    """
    if not (0 <= d2 <= d1 <= ambient <= 12) or d1 < 1:
        raise ValueError("need 1 <= d1 <= ambient <= 12 and 0 <= d2 <= d1")
    seed = seed_from(rng_or_seed)
    rng = derive_rng(seed, "subspace-stats")
    full = gf2.Subspace(ambient, tuple(1 << i for i in range(ambient)))
    S = gf2.sample_subspace(full, d1, rng)
    v_fixed = S.basis[0]
    dualS = _dual_of_span(S)
    # oblivious draw: uniform over vectors outside the dual of S
    while True:
        u = int(rng.integers(0, 1 << ambient))
        if not dualS.contains_bits(u):
            break
    hits_a = 0
    hits_b = 0
    for _ in range(trials):
        T = gf2.sample_subspace(S, d2, rng)
        if T.contains_bits(v_fixed):
            hits_a += 1
        if all((u & b).bit_count() % 2 == 0 for b in T.basis):
            hits_b += 1
    p_a = (2**d2 - 1) / (2**d1 - 1)
    p_b = (2 ** (d1 - d2) - 1) / (2**d1 - 1)
    freq_a = hits_a / trials
    freq_b = hits_b / trials
    sigma_a = math.sqrt(max(p_a * (1 - p_a), 1e-12) / trials)
    sigma_b = math.sqrt(max(p_b * (1 - p_b), 1e-12) / trials)
    return {
        "d1": d1, "d2": d2, "ambient": ambient, "trials": trials,
        "membership_frequency": freq_a,
        "membership_expected": p_a,
        "membership_within_3sigma": abs(freq_a - p_a) <= 3 * sigma_a + 1e-12,
        "oblivious_frequency": freq_b,
        "oblivious_expected": p_b,
        "oblivious_within_3sigma": abs(freq_b - p_b) <= 3 * sigma_b + 1e-12,
    }


def _dual_of_span(S: gf2.Subspace) -> gf2.Subspace:
    if S.dim == 0:
        return gf2.Subspace(S.ambient_dim, tuple(1 << i for i in range(S.ambient_dim)))
    M = gf2.GF2Matrix(rows=S.ambient_dim, cols=S.dim, columns=tuple(S.basis))
    return gf2.dual_basis(M)


def oneshot_structural_check(instance: OssInstance) -> dict:
    """Signature sets for the two messages partition every coset (exhaustive)."""
    overlaps = 0
    incomplete = 0
    for vk in range(1 << instance.params.r):
        s0 = oss.enumerate_signatures(instance, vk, 0)
        s1 = oss.enumerate_signatures(instance, vk, 1)
        coset = set(gf2.enumerate_coset_bits(instance.A[vk], instance.b[vk]))
        if s0 & s1:
            overlaps += 1
        if (s0 | s1) != coset:
            incomplete += 1
    return {
        "keys": 1 << instance.params.r,
        "overlapping_signature_sets": overlaps,
        "non_partitioning_keys": incomplete,
    }
