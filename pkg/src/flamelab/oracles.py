"""Classical oracle framework for the one-shot-signature and key-fire schemes.

Wire conventions (bit 0 is the first bit everywhere):

* bottom encoding: oracle outputs that can be "no answer" carry a leading
  validity flag at bit 0 (1 = valid); the payload sits above it. Flag 0
  forces a zero payload.
* signing-oracle family over secrets (pi, {A_y}, {b_y}):
    P      : x (n bits)            -> y||v (r+k bits),  y = H(x), v = A_y J(x) + b_y
    Pinv   : y||v (r+k bits)       -> flag||x (1+n bits)
    D      : y||v (r+k bits)       -> 1 bit   (v^T A_y = 0 and v != 0)
    D0     : y||m||v (r+1+k bits)  -> 1 bit   (v in coset and first bit of v = m)
* key-generation dispatch oracle: input sel||payload where sel is 2 bits
  (01=P, 10=Pinv, 11=D, 00=D0) and payload is r+1+k bits laid out so that
  every suboracle reads shared field positions: y = payload[0:r],
  v = payload[r:r+k], D0's message bit = payload[r+k]; P reads
  x = payload[0:n]. Unused payload bits are zero on honest inputs and are
  ignored. Output is bottom-encoded, 1+r+k bits wide.
* key-fire oracles O0..O4 gate their payloads behind signature checks and
  attestation-string equality; O2's output shares the dispatch's bottom
  encoding so that a passing gate XORs exactly the dispatch answer.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import gf2
from .serialize import canonical_dumps

FORMAT_NAME = "flamelab-instance"
FORMAT_VERSION = 1
TABLE_WIDTH_GUARD = 20

SEL_P, SEL_PINV, SEL_D, SEL_D0 = 0b01, 0b10, 0b11, 0b00


class MalformedOracleError(ValueError):
    """A bottom-encoded value had flag 0 with a nonzero payload."""


class InstanceFileError(ValueError):
    """Persisted instance file is corrupt or has the wrong version."""


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Deterministic child stream from an integer seed and string/int tags."""
    ints = [seed & 0xFFFFFFFFFFFFFFFF]
    for t in tags:
        if isinstance(t, str):
            ints.append(int.from_bytes(t.encode(), "little") % (1 << 63))
        else:
            ints.append(int(t) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(ints))


def seed_from(rng_or_seed) -> int:
    """Accept an int seed or a Generator; always return a persistable seed."""
    if isinstance(rng_or_seed, (int, np.integer)):
        return int(rng_or_seed)
    return int(rng_or_seed.integers(0, 1 << 63))


# ---------------------------------------------------------------------------
# Oracle primitives
# ---------------------------------------------------------------------------

class ClassicalOracle:
    """Deterministic total map from in_width bits to out_width bits."""

    def __init__(self, name: str, in_width: int, out_width: int,
                 fn: Callable[[np.ndarray], np.ndarray]):
        self.name = name
        self.in_width = in_width
        self.out_width = out_width
        self._fn = fn

    def eval_many(self, x: np.ndarray) -> np.ndarray:
        return self._fn(x.astype(np.uint64)).astype(np.uint64)

    def eval(self, x: int) -> int:
        if not 0 <= x < (1 << self.in_width):
            raise ValueError(f"input {x} out of range for {self.name}")
        return int(self.eval_many(np.array([x], dtype=np.uint64))[0])


def table_oracle(name: str, in_width: int, out_width: int, table: np.ndarray) -> ClassicalOracle:
    table = table.astype(np.uint64)
    return ClassicalOracle(name, in_width, out_width, lambda x: table[x.astype(np.int64)])


class RandomFunction:
    """Seeded truth table; values i.i.d. uniform, regenerable from the seed."""

    def __init__(self, in_width: int, out_width: int, seed: int):
        if in_width > TABLE_WIDTH_GUARD:
            raise ValueError(f"random function domain 2**{in_width} exceeds guard")
        self.in_width = in_width
        self.out_width = out_width
        self.seed = seed
        rng = derive_rng(seed, "random-function")
        self.table = rng.integers(0, 1 << out_width, size=1 << in_width, dtype=np.uint64)

    def oracle(self, name: str) -> ClassicalOracle:
        return table_oracle(name, self.in_width, self.out_width, self.table)

    def value(self, x: int) -> int:
        return int(self.table[x])


class RandomPermutation:
    """Seeded permutation of {0,1}^width with its inverse table."""

    def __init__(self, width: int, seed: int):
        if width > TABLE_WIDTH_GUARD:
            raise ValueError(f"permutation domain 2**{width} exceeds guard")
        self.width = width
        self.seed = seed
        rng = derive_rng(seed, "random-permutation")
        self.table = rng.permutation(1 << width).astype(np.uint64)
        self.inverse = np.argsort(self.table).astype(np.uint64)

    def forward(self, x: int) -> int:
        return int(self.table[x])

    def backward(self, y: int) -> int:
        return int(self.inverse[y])


def bottom_encode(payload: int, valid: bool) -> int:
    """flag||payload with flag at bit 0; invalid forces payload 0."""
    return (1 | (payload << 1)) if valid else 0


def bottom_decode(bits: int) -> Tuple[bool, int]:
    flag = bits & 1
    payload = bits >> 1
    if flag == 0 and payload != 0:
        raise MalformedOracleError(f"flag 0 with payload 0x{payload:x}")
    return bool(flag), payload


# ---------------------------------------------------------------------------
# OSS parameters and instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OssParams:
    n: int
    r: int
    k: int

    def __post_init__(self) -> None:
        if not (1 <= self.r < self.n <= self.k):
            raise ValueError(f"need 1 <= r < n <= k, got {self}")
        if self.n > TABLE_WIDTH_GUARD:
            raise ValueError(f"n = {self.n} exceeds the enumeration guard")

    @property
    def dispatch_in_width(self) -> int:
        return 3 + self.r + self.k

    @property
    def dispatch_out_width(self) -> int:
        return 1 + self.r + self.k


def asymptotic_parameter_formula(lam: int) -> dict:
    """The scheme's asymptotic parameter scaling, for documentation only.

    Desk-scale instances override these; the formula values are far beyond
    simulable widths for any lambda >= 2.
    """
    q = 16 * lam
    r = q * (lam - 1)
    n = r + (3 * q) // 2
    return {"lambda": lam, "q": q, "r": r, "n": n, "k": n}


DEFAULT_OSS = OssParams(n=4, r=2, k=4)


class OssInstance:
    """Oracle family (P, Pinv, D, D0, dispatch) plus its generating secrets."""

    def __init__(self, params: OssParams, seed: int):
        self.params = params
        self.seed = seed
        n, r, k = params.n, params.r, params.k
        self.pi = RandomPermutation(n, seed_from(derive_rng(seed, "pi")))
        rng_a = derive_rng(seed, "matrices")
        rng_b = derive_rng(seed, "offsets")
        self.A: List[gf2.GF2Matrix] = []
        self.b: List[int] = []
        for _ in range(1 << r):
            self.A.append(gf2.sample_full_column_rank(k, n - r, rng_a))
            self.b.append(int(rng_b.integers(0, 1 << k)))
        # numpy views of the secrets for vectorized oracle evaluation
        self._a_cols = np.array([M.columns for M in self.A], dtype=np.uint64)
        self._b_arr = np.array(self.b, dtype=np.uint64)
        self._member_table: Optional[np.ndarray] = None
        if r + k <= 24:
            self._member_table = self._build_member_table()
        self._build_oracles()

    # -- secret-side helpers ------------------------------------------------

    def _build_member_table(self) -> np.ndarray:
        """member[y << k | v] = z + 1 when v = A_y z + b_y, else 0."""
        r, k = self.params.r, self.params.k
        table = np.zeros(1 << (r + k), dtype=np.uint32)
        for y in range(1 << r):
            for z in range(1 << (self.params.n - r)):
                v = self.A[y].mul_bits(z) ^ self.b[y]
                table[(y << k) | v] = z + 1
        return table

    def coset_solve(self, y: int, v: int) -> Optional[int]:
        """z with A_y z + b_y = v, or None."""
        if self._member_table is not None:
            t = int(self._member_table[(y << self.params.k) | v])
            return None if t == 0 else t - 1
        z = gf2.solve_in_colspan(self.A[y], gf2.GF2Vector(self.params.k, v ^ self.b[y]))
        return None if z is None else z.bits

    def _solve_many(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized coset_solve; returns z+1 with 0 meaning 'not a member'."""
        if self._member_table is not None:
            idx = (y.astype(np.int64) << self.params.k) | v.astype(np.int64)
            return self._member_table[idx].astype(np.uint64)
        out = np.zeros(len(y), dtype=np.uint64)
        for i in range(len(y)):
            z = self.coset_solve(int(y[i]), int(v[i]))
            out[i] = 0 if z is None else z + 1
        return out

    def _mul_a(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """v = A_y z, vectorized over parallel arrays y, z."""
        v = np.zeros(len(y), dtype=np.uint64)
        for j in range(self.params.n - self.params.r):
            on = ((z >> np.uint64(j)) & np.uint64(1)).astype(bool)
            v[on] ^= self._a_cols[y.astype(np.int64)[on], j]
        return v

    def _dual_member(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Boolean array: v^T A_y = 0."""
        ok = np.ones(len(y), dtype=bool)
        for j in range(self.params.n - self.params.r):
            col = self._a_cols[y.astype(np.int64), j]
            ok &= (np.bitwise_count(v & col) & np.uint64(1)) == 0
        return ok

    def good_vk(self, y: int) -> bool:
        """A_y has a column whose first entry is 1 (both messages signable)."""
        return any(c & 1 for c in self.A[y].columns)

    def good_vk_set(self) -> List[int]:
        return [y for y in range(1 << self.params.r) if self.good_vk(y)]

    # -- oracle construction --------------------------------------------------

    def _build_oracles(self) -> None:
        n, r, k = self.params.n, self.params.r, self.params.k
        perm = self.pi.table
        perm_inv = self.pi.inverse
        mask_r = np.uint64((1 << r) - 1)
        mask_k = np.uint64((1 << k) - 1)
        mask_n = np.uint64((1 << n) - 1)

        def p_fn(x):
            px = perm[(x & mask_n).astype(np.int64)]
            y = px & mask_r
            z = px >> np.uint64(r)
            v = self._mul_a(y, z) ^ self._b_arr[y.astype(np.int64)]
            return y | (v << np.uint64(r))

        def pinv_fn(yv):
            y = yv & mask_r
            v = (yv >> np.uint64(r)) & mask_k
            z1 = self._solve_many(y, v)
            member = z1 != 0
            x = np.zeros(len(yv), dtype=np.uint64)
            if np.any(member):
                idx = (y[member] | ((z1[member] - np.uint64(1)) << np.uint64(r))).astype(np.int64)
                x[member] = perm_inv[idx]
            return np.where(member, np.uint64(1) | (x << np.uint64(1)), np.uint64(0))

        def d_fn(yv):
            y = yv & mask_r
            v = (yv >> np.uint64(r)) & mask_k
            return (self._dual_member(y, v) & (v != 0)).astype(np.uint64)

        def d0_fn(ymv):
            y = ymv & mask_r
            m = (ymv >> np.uint64(r)) & np.uint64(1)
            v = (ymv >> np.uint64(r + 1)) & mask_k
            member = self._solve_many(y, v) != 0
            return (member & ((v & np.uint64(1)) == m)).astype(np.uint64)

        self.P = ClassicalOracle("P", n, r + k, p_fn)
        self.Pinv = ClassicalOracle("Pinv", r + k, 1 + n, pinv_fn)
        self.D = ClassicalOracle("D", r + k, 1, d_fn)
        self.D0 = ClassicalOracle("D0", r + 1 + k, 1, d0_fn)

        def dispatch_fn(q):
            sel = q & np.uint64(3)
            payload = q >> np.uint64(2)
            y = payload & mask_r
            v = (payload >> np.uint64(r)) & mask_k
            mbit = (payload >> np.uint64(r + k)) & np.uint64(1)
            out = np.zeros(len(q), dtype=np.uint64)

            isP = sel == SEL_P
            if np.any(isP):
                out[isP] = np.uint64(1) | (p_fn(payload[isP] & mask_n) << np.uint64(1))
            isPinv = sel == SEL_PINV
            if np.any(isPinv):
                enc = pinv_fn(y[isPinv] | (v[isPinv] << np.uint64(r)))
                out[isPinv] = enc  # already flag||x, zero-padded into 1+r+k
            isD = sel == SEL_D
            if np.any(isD):
                bit = d_fn(y[isD] | (v[isD] << np.uint64(r)))
                out[isD] = np.uint64(1) | (bit << np.uint64(1))
            isD0 = sel == SEL_D0
            if np.any(isD0):
                member = self._solve_many(y[isD0], v[isD0]) != 0
                bit = (member & ((v[isD0] & np.uint64(1)) == mbit[isD0])).astype(np.uint64)
                out[isD0] = np.uint64(1) | (bit << np.uint64(1))
            return out

        self.dispatch = ClassicalOracle(
            "dispatch", self.params.dispatch_in_width, self.params.dispatch_out_width,
            dispatch_fn,
        )

        def sign_pred_fn(yv):
            y = yv & mask_r
            v = (yv >> np.uint64(r)) & mask_k
            dual = self._dual_member(y, v)
            return (dual & (v != 0) | (v == 0)).astype(np.uint64)

        # marking predicate used by the signing loop: D(vk, z) = 1 or z = 0
        self.sign_pred = ClassicalOracle("D-or-zero", r + k, 1, sign_pred_fn)


def gen_oss_oracles(params: OssParams, rng_or_seed) -> OssInstance:
    """Sample the permutation, matrices and offsets; build all oracles."""
    return OssInstance(params, seed_from(rng_or_seed))


# ---------------------------------------------------------------------------
# Key-fire parameters and instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyFireParams:
    oss: OssParams
    att_width: int
    sig_width: int
    msg_width: int
    j_max: int = 10

    def __post_init__(self) -> None:
        if min(self.att_width, self.sig_width, self.msg_width) < 1:
            raise ValueError("all widths must be >= 1")
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")
        p2 = self.oss.dispatch_in_width
        if self.msg_width > p2:
            raise ValueError("message width exceeds the dispatch input width")
        if self.oss.r + p2 > TABLE_WIDTH_GUARD:
            raise ValueError("attestation-function domain exceeds the table guard")
        budget = self.clone_register_budget()
        if budget > 64:
            raise ValueError(
                f"clone circuit needs {budget} label bits; the 64-bit limit applies"
            )

    @property
    def p1(self) -> int:
        return self.oss.r

    @property
    def p2(self) -> int:
        return self.oss.dispatch_in_width

    def genqkey_workspace_width(self) -> int:
        # dispatch query input plus its output register
        return self.p2 + self.oss.dispatch_out_width

    def clone_register_budget(self) -> int:
        # two GenQKey workspaces + msg + sign ancillas + both attestation regs
        return (
            2 * self.genqkey_workspace_width()
            + 1
            + 2 * self.j_max
            + 2 * (1 + self.att_width)
        )

    def embed_message(self, m: int) -> int:
        """A message as a dispatch-oracle input string (low bits, zero-pad)."""
        if not 0 <= m < (1 << self.msg_width):
            raise ValueError(f"message {m} out of range")
        return m


DEFAULT_KEYFIRE = KeyFireParams(oss=DEFAULT_OSS, att_width=3, sig_width=3, msg_width=4)


class KeyFireInstance:
    """OSS instance plus H0, H1, Hsig and the gated oracles O0..O4."""

    def __init__(self, kf_params: KeyFireParams, seed: int):
        self.kf_params = kf_params
        self.seed = seed
        self.oss = OssInstance(kf_params.oss, seed_from(derive_rng(seed, "oss")))
        att, sig = kf_params.att_width, kf_params.sig_width
        h_in = kf_params.p1 + kf_params.p2
        self.H0 = RandomFunction(h_in, att, seed_from(derive_rng(seed, "H0")))
        self.H1 = RandomFunction(h_in, att, seed_from(derive_rng(seed, "H1")))
        self.Hsig = RandomFunction(kf_params.msg_width, sig, seed_from(derive_rng(seed, "Hsig")))
        self._build_oracles()

    def _build_oracles(self) -> None:
        kf = self.kf_params
        r, k = kf.oss.r, kf.oss.k
        p2 = kf.p2
        att, sig, nu = kf.att_width, kf.sig_width, kf.msg_width
        h0t, h1t, hst = self.H0.table, self.H1.table, self.Hsig.table
        d0 = self.oss.D0
        dispatch = self.oss.dispatch
        mask_r = np.uint64((1 << r) - 1)
        mask_k = np.uint64((1 << k) - 1)
        mask_p2 = np.uint64((1 << p2) - 1)
        mask_att_enc = np.uint64((1 << (1 + att)) - 1)

        def gate_b(msg_bit: int):
            def fn(q):
                ivk = q & mask_r
                isig = (q >> np.uint64(r)) & mask_k
                z = (q >> np.uint64(r + k)) & mask_p2
                # D0 input is y||m||v
                ok = d0.eval_many(
                    ivk | (np.uint64(msg_bit) << np.uint64(r)) | (isig << np.uint64(r + 1))
                ) == 1
                h = (h0t if msg_bit == 0 else h1t)[(ivk | (z << np.uint64(r))).astype(np.int64)]
                return np.where(ok, np.uint64(1) | (h << np.uint64(1)), np.uint64(0))

            return fn

        self.O0 = ClassicalOracle("O0", r + k + p2, 1 + att, gate_b(0))
        self.O1 = ClassicalOracle("O1", r + k + p2, 1 + att, gate_b(1))

        def att_pair_ok(ivk, y0e, y1e, z):
            idx = (ivk | (z << np.uint64(r))).astype(np.int64)
            want0 = np.uint64(1) | (h0t[idx] << np.uint64(1))
            want1 = np.uint64(1) | (h1t[idx] << np.uint64(1))
            return (y0e == want0) & (y1e == want1)

        def o2_fn(q):
            ivk = q & mask_r
            y0e = (q >> np.uint64(r)) & mask_att_enc
            y1e = (q >> np.uint64(r + 1 + att)) & mask_att_enc
            z = (q >> np.uint64(r + 2 * (1 + att))) & mask_p2
            ok = att_pair_ok(ivk, y0e, y1e, z)
            out = np.zeros(len(q), dtype=np.uint64)
            if np.any(ok):
                out[ok] = dispatch.eval_many(z[ok])
            return out

        self.O2 = ClassicalOracle(
            "O2", r + 2 * (1 + att) + p2, kf.oss.dispatch_out_width, o2_fn
        )

        def o3_fn(q):
            ivk = q & mask_r
            y0e = (q >> np.uint64(r)) & mask_att_enc
            y1e = (q >> np.uint64(r + 1 + att)) & mask_att_enc
            m = (q >> np.uint64(r + 2 * (1 + att))) & np.uint64((1 << nu) - 1)
            ok = att_pair_ok(ivk, y0e, y1e, m)  # z := m, zero-padded
            h = hst[m.astype(np.int64)]
            return np.where(ok, np.uint64(1) | (h << np.uint64(1)), np.uint64(0))

        self.O3 = ClassicalOracle("O3", r + 2 * (1 + att) + nu, 1 + sig, o3_fn)

        def o4_fn(q):
            m = q & np.uint64((1 << nu) - 1)
            y = (q >> np.uint64(nu)) & np.uint64((1 << sig) - 1)
            return (hst[m.astype(np.int64)] == y).astype(np.uint64)

        self.O4 = ClassicalOracle("O4", nu + sig, 1, o4_fn)


def gen_keyfire_oracles(kf_params: KeyFireParams, rng_or_seed) -> KeyFireInstance:
    return KeyFireInstance(kf_params, seed_from(rng_or_seed))


# ---------------------------------------------------------------------------
# Persistence: store parameters and generator seeds, regenerate on load
# ---------------------------------------------------------------------------

def _instance_doc(instance) -> dict:
    if isinstance(instance, OssInstance):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": "oss",
            "params": {"n": instance.params.n, "r": instance.params.r, "k": instance.params.k},
            "seed": instance.seed,
        }
    if isinstance(instance, KeyFireInstance):
        kf = instance.kf_params
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": "keyfire",
            "params": {
                "n": kf.oss.n, "r": kf.oss.r, "k": kf.oss.k,
                "att_width": kf.att_width, "sig_width": kf.sig_width,
                "msg_width": kf.msg_width, "j_max": kf.j_max,
            },
            "seed": instance.seed,
        }
    raise TypeError(f"not a persistable instance: {type(instance)!r}")


def save_instance(instance, path: str) -> None:
    doc = canonical_dumps(_instance_doc(instance)) + "\n"
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as f:
        f.write(doc)
    os.replace(tmp, path)


def load_instance(path: str):
    try:
        with open(path, encoding="ascii") as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise InstanceFileError(f"corrupt instance file {path!r}: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise InstanceFileError(f"{path!r} is not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise InstanceFileError(
            f"version mismatch: file has {doc.get('version')!r}, expected {FORMAT_VERSION}"
        )
    try:
        p = doc["params"]
        if doc["kind"] == "oss":
            return OssInstance(OssParams(n=p["n"], r=p["r"], k=p["k"]), int(doc["seed"]))
        if doc["kind"] == "keyfire":
            kf = KeyFireParams(
                oss=OssParams(n=p["n"], r=p["r"], k=p["k"]),
                att_width=p["att_width"], sig_width=p["sig_width"],
                msg_width=p["msg_width"], j_max=p["j_max"],
            )
            return KeyFireInstance(kf, int(doc["seed"]))
    except (KeyError, TypeError) as e:
        raise InstanceFileError(f"missing fields in {path!r}: {e}") from e
    raise InstanceFileError(f"unknown instance kind {doc.get('kind')!r}")


# ---------------------------------------------------------------------------
# Audits (brute-force recomputation from secrets via the gf2 layer)
# ---------------------------------------------------------------------------

def audit_oss_instance(instance: OssInstance) -> List[str]:
    """Exhaustive oracle audit; returns a list of violations (empty = pass)."""
    params = instance.params
    n, r, k = params.n, params.r, params.k
    failures: List[str] = []

    xs = np.arange(1 << n, dtype=np.uint64)
    enc = instance.Pinv.eval_many(instance.P.eval_many(xs))
    if not np.all(enc == (np.uint64(1) | (xs << np.uint64(1)))):
        failures.append("Pinv(P(x)) != x for some x")

    yv = np.arange(1 << (r + k), dtype=np.uint64)
    y = yv & np.uint64((1 << r) - 1)
    v = yv >> np.uint64(r)
    d_out = instance.D.eval_many(yv).astype(bool)
    dual_sets = [
        set(gf2.dual_basis(instance.A[yy]).enumerate_bits()) for yy in range(1 << r)
    ]
    dual_ref = np.array(
        [int(v[i]) in dual_sets[int(y[i])] and v[i] != 0 for i in range(len(yv))]
    )
    if not np.all(d_out == dual_ref):
        failures.append("D disagrees with dual membership")

    coset_sets = [
        set(gf2.enumerate_coset_bits(instance.A[yy], instance.b[yy]))
        for yy in range(1 << r)
    ]
    ymv = np.arange(1 << (r + 1 + k), dtype=np.uint64)
    yy = ymv & np.uint64((1 << r) - 1)
    mm = (ymv >> np.uint64(r)) & np.uint64(1)
    vv = ymv >> np.uint64(r + 1)
    d0_out = instance.D0.eval_many(ymv).astype(bool)
    d0_ref = np.array(
        [
            int(vv[i]) in coset_sets[int(yy[i])] and (int(vv[i]) & 1) == int(mm[i])
            for i in range(len(ymv))
        ]
    )
    if not np.all(d0_out == d0_ref):
        failures.append("D0 disagrees with coset membership / first-bit rule")

    # D0 = 1 implies Pinv valid on the same (y, v)
    sel = d0_out
    if np.any(sel):
        pv = instance.Pinv.eval_many(yy[sel] | (vv[sel] << np.uint64(r)))
        if not np.all(pv & np.uint64(1)):
            failures.append("D0 accepts a vector Pinv rejects")

    # dispatch mirrors the suboracles on its full input space
    q = np.arange(1 << params.dispatch_in_width, dtype=np.uint64)
    got = instance.dispatch.eval_many(q)
    selbits = q & np.uint64(3)
    payload = q >> np.uint64(2)
    pay_y = payload & np.uint64((1 << r) - 1)
    pay_v = (payload >> np.uint64(r)) & np.uint64((1 << k) - 1)
    pay_m = (payload >> np.uint64(r + k)) & np.uint64(1)
    want = np.zeros(len(q), dtype=np.uint64)
    mP = selbits == SEL_P
    want[mP] = np.uint64(1) | (
        instance.P.eval_many(payload[mP] & np.uint64((1 << n) - 1)) << np.uint64(1)
    )
    mPi = selbits == SEL_PINV
    want[mPi] = instance.Pinv.eval_many(pay_y[mPi] | (pay_v[mPi] << np.uint64(r)))
    mD = selbits == SEL_D
    want[mD] = np.uint64(1) | (
        instance.D.eval_many(pay_y[mD] | (pay_v[mD] << np.uint64(r))) << np.uint64(1)
    )
    mD0 = selbits == SEL_D0
    want[mD0] = np.uint64(1) | (
        instance.D0.eval_many(
            pay_y[mD0] | (pay_m[mD0] << np.uint64(r)) | (pay_v[mD0] << np.uint64(r + 1))
        )
        << np.uint64(1)
    )
    if not np.all(got == want):
        failures.append("dispatch disagrees with a suboracle")

    for yy2 in range(1 << r):
        sigs0 = {c for c in coset_sets[yy2] if (c & 1) == 0}
        sigs1 = {c for c in coset_sets[yy2] if (c & 1) == 1}
        if sigs0 & sigs1:
            failures.append(f"signature sets overlap for vk {yy2}")
        if sigs0 | sigs1 != coset_sets[yy2]:
            failures.append(f"signature sets do not partition the coset for vk {yy2}")

    return failures


def audit_keyfire_gating(instance: KeyFireInstance, exhaustive_z: bool = True) -> List[str]:
    """O0-O4 gate audit against table lookups; empty list = pass."""
    kf = instance.kf_params
    oss = instance.oss
    r, k = kf.oss.r, kf.oss.k
    att, nu = kf.att_width, kf.msg_width
    p2 = kf.p2
    failures: List[str] = []

    def h_index(ivk: int, z: int) -> int:
        return ivk | (z << r)

    # O0 / O1: exhaustive over the whole input space when small enough
    width = r + k + p2
    if exhaustive_z and width <= 22:
        q = np.arange(1 << width, dtype=np.uint64)
    else:
        rng = derive_rng(instance.seed, "audit-o01")
        q = rng.integers(0, 1 << width, size=4096, dtype=np.uint64)
    for name, oracle, ht, mbit in (
        ("O0", instance.O0, instance.H0.table, 0),
        ("O1", instance.O1, instance.H1.table, 1),
    ):
        got = oracle.eval_many(q)
        ivk = q & np.uint64((1 << r) - 1)
        isg = (q >> np.uint64(r)) & np.uint64((1 << k) - 1)
        z = q >> np.uint64(r + k)
        ok = oss.D0.eval_many(
            ivk | (np.uint64(mbit) << np.uint64(r)) | (isg << np.uint64(r + 1))
        ).astype(bool)
        want = np.where(
            ok,
            np.uint64(1)
            | (ht[(ivk | (z << np.uint64(r))).astype(np.int64)] << np.uint64(1)),
            np.uint64(0),
        )
        if not np.all(got == want):
            failures.append(f"{name} gate output mismatch")

    # O2: for sample points (ivk, z), exhaustive over both encoded attestations
    att_enc = np.arange(1 << (1 + att), dtype=np.uint64)
    pairs = [(ivk, z) for ivk in range(1 << r) for z in range(min(1 << p2, 64))]
    for ivk, z in pairs:
        want0 = bottom_encode(instance.H0.value(h_index(ivk, z)), True)
        want1 = bottom_encode(instance.H1.value(h_index(ivk, z)), True)
        y0 = np.repeat(att_enc, len(att_enc))
        y1 = np.tile(att_enc, len(att_enc))
        q2 = (
            np.uint64(ivk)
            | (y0 << np.uint64(r))
            | (y1 << np.uint64(r + 1 + att))
            | (np.uint64(z) << np.uint64(r + 2 * (1 + att)))
        )
        got = instance.O2.eval_many(q2)
        gate = (y0 == np.uint64(want0)) & (y1 == np.uint64(want1))
        expect = np.where(gate, np.uint64(oss.dispatch.eval(z)), np.uint64(0))
        if not np.all(got == expect):
            failures.append(f"O2 gate wrong at ivk={ivk} z={z}")
            break

    # O3: exhaustive over encoded attestations for every (ivk, m)
    for ivk in range(1 << r):
        for m in range(1 << nu):
            want0 = bottom_encode(instance.H0.value(h_index(ivk, m)), True)
            want1 = bottom_encode(instance.H1.value(h_index(ivk, m)), True)
            y0 = np.repeat(att_enc, len(att_enc))
            y1 = np.tile(att_enc, len(att_enc))
            q3 = (
                np.uint64(ivk)
                | (y0 << np.uint64(r))
                | (y1 << np.uint64(r + 1 + att))
                | (np.uint64(m) << np.uint64(r + 2 * (1 + att)))
            )
            got = instance.O3.eval_many(q3)
            gate = (y0 == np.uint64(want0)) & (y1 == np.uint64(want1))
            expect = np.where(
                gate,
                np.uint64(bottom_encode(instance.Hsig.value(m), True)),
                np.uint64(0),
            )
            if not np.all(got == expect):
                failures.append(f"O3 gate wrong at ivk={ivk} m={m}")

    # O4: exhaustive
    q4 = np.arange(1 << (nu + kf.sig_width), dtype=np.uint64)
    m4 = q4 & np.uint64((1 << nu) - 1)
    y4 = q4 >> np.uint64(nu)
    want4 = (instance.Hsig.table[m4.astype(np.int64)] == y4).astype(np.uint64)
    if not np.all(instance.O4.eval_many(q4) == want4):
        failures.append("O4 verification table mismatch")

    return failures
