"""One-shot signature algorithms over the sparse simulator.

The purified key generation runs against the bundled dispatch oracle with a
two-query routing:

  pass 1: Hadamard the x-field (controlled on a fresh selector), step the
          selector to the forward-permutation tag, query;
  pass 2: swap the answer into the payload field (the old x lands in the
          answer register under the set validity flag), step the selector to
          the inverse tag, query - the inverse answer cancels the old x by
          XOR; a trailing bit flip returns the selector to zero.

The selector tags are chosen so that "increment" walks fresh -> forward ->
inverse, which is why the forward tag is 01 and the inverse tag is 10.

Register name conventions for a flame workspace (widths in parens):
  sel0(1) sel1(1) vk(r) kx(n-r) kr(k-n+r) pm(1) qflag(1) qout(r+k)
where the dispatch payload is vk||kx||kr||pm, the x-field is vk||kx and the
signing-key field is kx||kr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import sim
from .gf2 import enumerate_coset_bits
from .oracles import ClassicalOracle, OssInstance, OssParams
from .sim import (
    Controlled,
    Hadamard,
    HadamardMulti,
    Operation,
    OracleXor,
    RegisterLayout,
    SparseState,
    SwapRegs,
    XFlip,
    apply_inverse,
    apply_op,
    apply_ops,
    binding,
    init_state,
    p_and,
    reg_bit_equals_const,
    reg_bit_equals_reg_bit,
    reg_equals,
    regs_all_zero,
)

DEFAULT_J_MAX = 10

FLAME_REG_ORDER = ("sel0", "sel1", "vk", "kx", "kr", "pm", "qflag", "qout")


def flame_reg_spec(params: OssParams, prefix: str = "") -> List[Tuple[str, int]]:
    n, r, k = params.n, params.r, params.k
    return [
        (prefix + "sel0", 1),
        (prefix + "sel1", 1),
        (prefix + "vk", r),
        (prefix + "kx", n - r),
        (prefix + "kr", k - n + r),
        (prefix + "pm", 1),
        (prefix + "qflag", 1),
        (prefix + "qout", r + k),
    ]


def flame_layout(params: OssParams) -> RegisterLayout:
    return RegisterLayout(flame_reg_spec(params))


def genqkey_algorithm_ops(instance: OssInstance, prefix: str = "") -> List[Operation]:
    """The fixed unitary applied before each dispatch query (U1)."""
    p = lambda name: prefix + name
    fresh = p_and(reg_equals(p("sel0"), 0), reg_equals(p("sel1"), 0))
    after_forward = p_and(reg_equals(p("sel0"), 1), reg_equals(p("sel1"), 0))
    return [
        Controlled(fresh, HadamardMulti((p("vk"), p("kx")))),
        Controlled(after_forward, SwapRegs((p("vk"), p("kx"), p("kr")), (p("qout"),))),
        XFlip(p("sel0")),
        Controlled(reg_equals(p("sel0"), 0), XFlip(p("sel1"))),
    ]


def genqkey_query_op(instance: OssInstance, prefix: str = "") -> Operation:
    p = lambda name: prefix + name
    return OracleXor(
        binding(
            instance.dispatch,
            [p("sel0"), p("sel1"), p("vk"), p("kx"), p("kr"), p("pm")],
            [p("qflag"), p("qout")],
        )
    )


def genqkey_finisher_op(prefix: str = "") -> Operation:
    # the last query leaves the selector at the inverse tag (10)
    return XFlip(prefix + "sel1")


GENQKEY_QUERIES = 2  # dispatch queries per key generation


@dataclass
class FlameState:
    """Purified key-generation output over a flame workspace."""

    state: SparseState
    params: OssParams
    prefix: str = ""

    def reg(self, name: str) -> str:
        return self.prefix + name

    @property
    def key_regs(self) -> Tuple[str, str]:
        return (self.reg("kx"), self.reg("kr"))

    @property
    def aux_regs(self) -> Tuple[str, ...]:
        return tuple(
            self.reg(n) for n in ("sel0", "sel1", "pm", "qflag", "qout")
        )

    def aux_zero_weight(self) -> float:
        pred = regs_all_zero(self.aux_regs)
        sel = pred.eval(self.state.layout, self.state.labels)
        a = self.state.amps[sel]
        return float(np.sum(a.real**2 + a.imag**2))

    def copy(self) -> "FlameState":
        return FlameState(self.state.copy(), self.params, self.prefix)


def gen_qkey_purified(instance: OssInstance) -> FlameState:
    """Exact flame state: no measurement, workspace returned to zero."""
    st = init_state(flame_layout(instance.params))
    u1 = genqkey_algorithm_ops(instance)
    q = genqkey_query_op(instance)
    for _ in range(GENQKEY_QUERIES):
        apply_ops(st, u1)
        apply_op(st, q)
    apply_op(st, genqkey_finisher_op())
    return FlameState(st, instance.params)


def flame_reference_state(instance: OssInstance) -> SparseState:
    """Brute-force flame built directly from the secrets (test oracle)."""
    params = instance.params
    lay = flame_layout(params)
    amp = 1.0 / math.sqrt(2**params.n)
    pairs = []
    for x in range(1 << params.n):
        px = instance.pi.forward(x)
        y = px & ((1 << params.r) - 1)
        z = px >> params.r
        v = instance.A[y].mul_bits(z) ^ instance.b[y]
        kx = v & ((1 << (params.n - params.r)) - 1)
        kr = v >> (params.n - params.r)
        pairs.append((lay.label_int(vk=y, kx=kx, kr=kr), amp))
    return sim.state_from_amplitudes(lay, pairs)


# ---------------------------------------------------------------------------
# Measured key generation and signing
# ---------------------------------------------------------------------------

def key_layout(params: OssParams) -> RegisterLayout:
    return RegisterLayout([("key0", 1), ("keyrest", params.k - 1)])


@dataclass
class OssKey:
    vk: int
    state: SparseState
    params: OssParams


def key_reference_state(instance: OssInstance, vk: int) -> SparseState:
    """Coset state for a fixed verification key, built from the secrets."""
    lay = key_layout(instance.params)
    coset = enumerate_coset_bits(instance.A[vk], instance.b[vk])
    amp = 1.0 / math.sqrt(len(coset))
    return sim.state_from_amplitudes(lay, [(v, amp) for v in coset])


def gen_qkey(
    instance: OssInstance,
    rng: np.random.Generator,
    flame: Optional[FlameState] = None,
) -> OssKey:
    """Run purified key generation, then measure the verification key.

    A prebuilt flame may be passed to amortize the circuit across trials
    (the purified state is identical every run).
    """
    work = gen_qkey_purified(instance) if flame is None else flame.copy()
    vk = sim.measure(work.state, "vk", rng)
    key_field = sim.extract_registers(work.state, ["kx", "kr"])
    lay = key_layout(instance.params)
    state = SparseState(lay, key_field.labels.copy(), key_field.amps.copy())
    return OssKey(vk=vk, state=state, params=instance.params)


def _fixed_vk_sign_pred(instance: OssInstance, vk: int) -> ClassicalOracle:
    base = instance.sign_pred
    r = instance.params.r

    def fn(z):
        return base.eval_many(np.uint64(vk) | (z << np.uint64(r)))

    return ClassicalOracle(f"D-or-zero@vk={vk}", instance.params.k, 1, fn)


def sign(
    instance: OssInstance,
    key: OssKey,
    m: int,
    j_max: int = DEFAULT_J_MAX,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[dict] = None,
) -> Optional[int]:
    """Measured signing loop; returns the k-bit signature or None.

    Each failed attempt applies the Hadamard / membership-mark / Hadamard
    correction with the mark bit measured and discarded. ``trace`` (if given)
    receives the succeeding iteration and the final key measurement.
    """
    if rng is None:
        raise ValueError("sign requires a seeded rng")
    if m not in (0, 1):
        raise ValueError("the scheme signs 1-bit messages")
    params = key.params
    lay = RegisterLayout([("key0", 1), ("keyrest", params.k - 1), ("mark", 1)])
    st = sim.embed(key.state, lay)
    pred = _fixed_vk_sign_pred(instance, key.vk)
    mark_bind = binding(pred, ["key0", "keyrest"], ["mark"])
    for j in range(1, j_max + 1):
        first = sim.measure(st, "key0", rng)
        if first == m:
            rest = sim.measure(st, "keyrest", rng)
            sig = first | (rest << 1)
            if trace is not None:
                trace["iteration"] = j
                trace["key"] = sig
            return sig
        sim.apply_hadamard(st, "key0")
        sim.apply_hadamard(st, "keyrest")
        sim.apply_oracle_xor(st, mark_bind)
        sim.measure(st, "mark", rng)
        sim.apply_hadamard(st, "key0")
        sim.apply_hadamard(st, "keyrest")
    if trace is not None:
        first = sim.measure(st, "key0", rng)
        rest = sim.measure(st, "keyrest", rng)
        trace["iteration"] = 0
        trace["key"] = first | (rest << 1)
    return None


def verify(instance: OssInstance, vk: int, m: int, sig: int) -> bool:
    r = instance.params.r
    return instance.D0.eval(vk | (m << r) | (sig << (r + 1))) == 1


def enumerate_signatures(instance: OssInstance, vk: int, m: int) -> set:
    coset = enumerate_coset_bits(instance.A[vk], instance.b[vk])
    return {v for v in coset if (v & 1) == m}


# ---------------------------------------------------------------------------
# Measurement-deferred (coherent) signing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignRegs:
    """Register roles for one coherent signing unitary."""

    key_regs: tuple                 # ordered; bit 0 of the first is the message bit
    flag_regs: tuple                # one per iteration
    mark_regs: tuple                # one per iteration
    msg_reg: Optional[str] = None   # register-valued message...
    msg_fixed: Optional[int] = None # ...or a fixed classical bit
    vk_reg: Optional[str] = None
    vk_fixed: Optional[int] = None


@dataclass
class CoherentSignTranscript:
    ops: List[Operation]
    regs: SignRegs
    j_max: int

    def describe(self) -> List[str]:
        return [op.describe() for op in self.ops]


def coherent_sign_ops(instance: OssInstance, regs: SignRegs, j_max: int) -> List[Operation]:
    if len(regs.flag_regs) < j_max or len(regs.mark_regs) < j_max:
        raise ValueError("need one flag and one mark register per iteration")
    if regs.msg_reg is None and regs.msg_fixed is None:
        raise ValueError("message source missing")
    if regs.vk_reg is None and regs.vk_fixed is None:
        raise ValueError("verification-key source missing")
    if regs.msg_reg is not None:
        success_bit = reg_bit_equals_reg_bit(regs.key_regs[0], 0, regs.msg_reg, 0)
    else:
        success_bit = reg_bit_equals_const(regs.key_regs[0], 0, regs.msg_fixed)
    if regs.vk_reg is not None:
        mark_oracle = instance.sign_pred
        mark_inputs = (regs.vk_reg,) + regs.key_regs
    else:
        mark_oracle = _fixed_vk_sign_pred(instance, regs.vk_fixed)
        mark_inputs = regs.key_regs

    ops: List[Operation] = []
    for j in range(j_max):
        no_success_before = regs_all_zero(regs.flag_regs[:j])
        ops.append(
            Controlled(
                p_and(success_bit, no_success_before) if j else success_bit,
                XFlip(regs.flag_regs[j]),
            )
        )
        active = regs_all_zero(regs.flag_regs[: j + 1])
        ops.append(Controlled(active, HadamardMulti(regs.key_regs)))
        ops.append(
            Controlled(
                active,
                OracleXor(binding(mark_oracle, mark_inputs, [regs.mark_regs[j]])),
            )
        )
        ops.append(Controlled(active, HadamardMulti(regs.key_regs)))
    return ops


def coherent_sign(
    state: SparseState, instance: OssInstance, regs: SignRegs, j_max: int = DEFAULT_J_MAX
) -> CoherentSignTranscript:
    """Apply the measurement-deferred signing unitary; ancillas must be zero."""
    for anc in regs.flag_regs[:j_max] + regs.mark_regs[:j_max]:
        if sim.project_expect(state, anc, 0) < 1.0 - sim.NORM_TOLERANCE:
            raise ValueError(f"ancilla {anc!r} not zeroed")
    ops = coherent_sign_ops(instance, regs, j_max)
    apply_ops(state, ops)
    return CoherentSignTranscript(ops=ops, regs=regs, j_max=j_max)


# ---------------------------------------------------------------------------
# Exact signing surrogate (test-only unitary computed from the secrets)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactSign(Operation):
    """Reflection mapping each coset state onto its valid-signature state.

    Test instrumentation: separates routing errors from the weight the
    truncated signing loop leaks into never-succeeded branches. Never used by
    the scheme paths.
    """

    instance: object
    key_regs: tuple
    msg_reg: Optional[str] = None
    msg_fixed: Optional[int] = None
    vk_reg: Optional[str] = None
    vk_fixed: Optional[int] = None
    # per-group key values are deduplicated during the reflection
    may_collide = False

    @property
    def writes(self):
        return frozenset(self.key_regs)

    def _direction(self, vk: int, m: int) -> Optional[Dict[int, float]]:
        inst = self.instance
        coset = enumerate_coset_bits(inst.A[vk], inst.b[vk])
        sigs = [v for v in coset if (v & 1) == m]
        if not sigs or len(sigs) == len(coset):
            return None  # no valid target, or already the signature state
        ca = 1.0 / math.sqrt(len(coset))
        sa = 1.0 / math.sqrt(len(sigs))
        d: Dict[int, float] = {v: ca for v in coset}
        for v in sigs:
            d[v] -= sa
        norm = math.sqrt(sum(x * x for x in d.values()))
        return {v: x / norm for v, x in d.items() if abs(x) > 1e-15}

    def transform(self, layout, labels, amps):
        keyval = layout.extract_group(labels, self.key_regs)
        rest = labels ^ layout.scatter_group(keyval, self.key_regs)
        uniq, inverse = np.unique(rest, return_inverse=True)
        out_labels: List[np.ndarray] = []
        out_amps: List[np.ndarray] = []
        for gi in range(len(uniq)):
            sel = inverse == gi
            g_labels, g_amps, g_keys = labels[sel], amps[sel], keyval[sel]
            probe = np.array([uniq[gi]], dtype=np.uint64)
            vk = (
                self.vk_fixed
                if self.vk_reg is None
                else int(layout.extract(probe, self.vk_reg)[0])
            )
            m = (
                self.msg_fixed
                if self.msg_reg is None
                else int(layout.extract(probe, self.msg_reg)[0]) & 1
            )
            d = self._direction(vk, m)
            if d is None:
                out_labels.append(g_labels)
                out_amps.append(g_amps)
                continue
            s = sum(
                d.get(int(kv), 0.0) * a for kv, a in zip(g_keys, g_amps)
            )
            amp_by_key = {int(kv): a for kv, a in zip(g_keys, g_amps)}
            for c, dc in d.items():
                amp_by_key[c] = amp_by_key.get(c, 0j) - 2.0 * s * dc
            keys = np.array(sorted(amp_by_key), dtype=np.uint64)
            vals = np.array([amp_by_key[int(kv)] for kv in keys], dtype=np.complex128)
            out_labels.append(uniq[gi] | layout.scatter_group(keys, self.key_regs))
            out_amps.append(vals)
        return np.concatenate(out_labels), np.concatenate(out_amps)

    def describe(self):
        return f"EXACT-SIGN({','.join(self.key_regs)})"


# ---------------------------------------------------------------------------
# Exact joint outcome distributions for the coherent/measured comparison
# ---------------------------------------------------------------------------

def coherent_sign_distribution(
    instance: OssInstance, vk: int, m: int, j_max: int
) -> Dict[Tuple[int, int], float]:
    """Born distribution of (success-iteration, key value) after the unitary.

    Iteration 0 encodes the all-failed branch.
    """
    params = instance.params
    regspec = [("key0", 1), ("keyrest", params.k - 1)]
    regspec += [(f"flag{j}", 1) for j in range(j_max)]
    regspec += [(f"mark{j}", 1) for j in range(j_max)]
    lay = RegisterLayout(regspec)
    st = sim.embed(key_reference_state(instance, vk), lay)
    regs = SignRegs(
        key_regs=("key0", "keyrest"),
        flag_regs=tuple(f"flag{j}" for j in range(j_max)),
        mark_regs=tuple(f"mark{j}" for j in range(j_max)),
        msg_fixed=m,
        vk_fixed=vk,
    )
    apply_ops(st, coherent_sign_ops(instance, regs, j_max))
    out: Dict[Tuple[int, int], float] = {}
    labels, amps = st.labels, st.amps
    key = labels & np.uint64((1 << params.k) - 1)
    weights = amps.real**2 + amps.imag**2
    for i in range(len(labels)):
        lab = int(labels[i])
        flags = [(lab >> (params.k + j)) & 1 for j in range(j_max)]
        it = 0
        for j, f in enumerate(flags):
            if f:
                it = j + 1
                break
        kv = int(key[i])
        out[(it, kv)] = out.get((it, kv), 0.0) + float(weights[i])
    return out


def measured_sign_distribution(
    instance: OssInstance, vk: int, m: int, j_max: int
) -> Dict[Tuple[int, int], float]:
    """Exact outcome distribution of the measured signing loop.

    Enumerates every measurement path (first-bit outcome and discarded mark
    bit per iteration) with dense 2^k vectors; an independent oracle for the
    deferred-measurement equivalence check. Outcomes are keyed like
    coherent_sign_distribution; failed runs also measure the key register.
    """
    params = instance.params
    k = params.k
    dim = 1 << k
    pred = np.array(
        [instance.sign_pred.eval(vk | (v << params.r)) for v in range(dim)],
        dtype=bool,
    )
    had = sim._hadamard_matrix(k)
    coset = enumerate_coset_bits(instance.A[vk], instance.b[vk])
    psi0 = np.zeros(dim, dtype=np.complex128)
    psi0[coset] = 1.0 / math.sqrt(len(coset))
    first_is_m = (np.arange(dim) & 1) == m
    out: Dict[Tuple[int, int], float] = {}

    def add(key: Tuple[int, int], w: float) -> None:
        if w > 1e-18:
            out[key] = out.get(key, 0.0) + float(w)

    def walk(psi: np.ndarray, weight: float, j: int) -> None:
        if weight <= 1e-18:
            return
        if j > j_max:
            for v in range(dim):
                add((0, v), weight * abs(psi[v]) ** 2)
            return
        p_succ = float(np.sum(np.abs(psi[first_is_m]) ** 2))
        if p_succ > 0:
            for v in np.nonzero(first_is_m)[0]:
                add((j, int(v)), weight * abs(psi[v]) ** 2)
        p_fail = 1.0 - p_succ
        if p_fail <= 1e-15:
            return
        fail = np.where(first_is_m, 0, psi) / math.sqrt(p_fail)
        fail = had @ fail
        for mark in (True, False):
            branch = np.where(pred == mark, fail, 0)
            p_branch = float(np.sum(np.abs(branch) ** 2))
            if p_branch <= 1e-15:
                continue
            nxt = had @ (branch / math.sqrt(p_branch))
            walk(nxt, weight * p_fail * p_branch, j + 1)

    walk(psi0, 1.0, 1)
    return out


def total_variation(p: Dict, q: Dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(x, 0.0) - q.get(x, 0.0)) for x in keys)
