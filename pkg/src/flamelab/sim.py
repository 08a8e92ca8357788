"""Sparse pure-state simulator over named bit registers.

States are maps from basis labels (integers of at most 64 bits, one bit per
register-layout position, register order little-endian) to complex
amplitudes, stored as parallel numpy arrays sorted by label. The gate set is
exactly what the schemes need: per-register Walsh-Hadamard, bit flips,
register swaps, classical-oracle XOR queries, predicate-controlled versions
of those, projective measurement and overlap computation.

All non-measurement operations are involutions (or have recorded inverses),
so a recorded operation sequence inverts by replaying it in reverse order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

PRUNE_THRESHOLD = 1e-12
NORM_TOLERANCE = 1e-9
DEFAULT_SUPPORT_CAP = 1 << 22
MAX_TOTAL_WIDTH = 64


class LayoutError(ValueError):
    pass


class ResourceError(RuntimeError):
    """Support size exceeded the configured cap."""


class NotInvertibleError(ValueError):
    """Raised when inverting a sequence that contains a measurement."""


def _u(x: int) -> np.uint64:
    return np.uint64(x & 0xFFFFFFFFFFFFFFFF)


class RegisterLayout:
    """Ordered named bit registers; offsets are prefix sums of widths."""

    def __init__(self, regs: Sequence[Tuple[str, int]]):
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            raise LayoutError("register names must be unique")
        offset = 0
        self._regs = {}
        self.order: List[str] = []
        for name, width in regs:
            if width < 1:
                raise LayoutError(f"register {name!r} must have width >= 1")
            self._regs[name] = (offset, width)
            self.order.append(name)
            offset += width
        if offset > MAX_TOTAL_WIDTH:
            raise LayoutError(f"total width {offset} exceeds {MAX_TOTAL_WIDTH} bits")
        self.total_width = offset

    def offset(self, name: str) -> int:
        return self._regs[name][0]

    def width(self, name: str) -> int:
        return self._regs[name][1]

    def names(self) -> List[str]:
        return list(self.order)

    def __contains__(self, name: str) -> bool:
        return name in self._regs

    def check(self, name: str) -> None:
        if name not in self._regs:
            raise LayoutError(f"unknown register {name!r}")

    def group_width(self, names: Sequence[str]) -> int:
        return sum(self.width(n) for n in names)

    def extract(self, labels: np.ndarray, name: str) -> np.ndarray:
        off, w = self._regs[name]
        return (labels >> _u(off)) & _u((1 << w) - 1)

    def extract_group(self, labels: np.ndarray, names: Sequence[str]) -> np.ndarray:
        """Concatenated register values, first register in the low bits."""
        acc = np.zeros_like(labels)
        shift = 0
        for n in names:
            acc = acc | (self.extract(labels, n) << _u(shift))
            shift += self.width(n)
        return acc

    def scatter_group(self, values: np.ndarray, names: Sequence[str]) -> np.ndarray:
        """Inverse of extract_group: place value bits at register positions."""
        acc = np.zeros_like(values)
        shift = 0
        for n in names:
            off, w = self._regs[n]
            chunk = (values >> _u(shift)) & _u((1 << w) - 1)
            acc = acc | (chunk << _u(off))
            shift += w
        return acc

    def label_int(self, **reg_values: int) -> int:
        acc = 0
        for name, v in reg_values.items():
            off, w = self._regs[name]
            if not 0 <= v < (1 << w):
                raise ValueError(f"value {v} out of range for register {name!r}")
            acc |= v << off
        return acc

    def split_label(self, label: int) -> dict:
        return {
            n: (label >> off) & ((1 << w) - 1)
            for n, (off, w) in self._regs.items()
        }

    def same_as(self, other: "RegisterLayout") -> bool:
        return self.order == other.order and all(
            self._regs[n] == other._regs[n] for n in self.order
        )


class SparseState:
    """Sparse pure state; labels kept sorted, unique, pruned, norm ~ 1."""

    def __init__(
        self,
        layout: RegisterLayout,
        labels: np.ndarray,
        amps: np.ndarray,
        support_cap: int = DEFAULT_SUPPORT_CAP,
    ):
        self.layout = layout
        self.labels = labels.astype(np.uint64, copy=False)
        self.amps = amps.astype(np.complex128, copy=False)
        self.support_cap = support_cap
        self.strict_norm = True  # heavy routines may defer the per-op check
        self._sorted = bool(len(labels) < 2 or np.all(labels[1:] > labels[:-1]))

    @property
    def support_size(self) -> int:
        return len(self.labels)

    def norm_sq(self) -> float:
        return float(np.sum(self.amps.real**2 + self.amps.imag**2))

    def copy(self) -> "SparseState":
        out = SparseState(self.layout, self.labels.copy(), self.amps.copy(), self.support_cap)
        out.strict_norm = self.strict_norm
        out._sorted = self._sorted
        return out

    def ensure_sorted(self) -> None:
        if not self._sorted:
            order = np.argsort(self.labels, kind="stable")
            self.labels = self.labels[order]
            self.amps = self.amps[order]
            self._sorted = True

    def amp_of(self, label: int) -> complex:
        self.ensure_sorted()
        i = np.searchsorted(self.labels, _u(label))
        if i < len(self.labels) and self.labels[i] == _u(label):
            return complex(self.amps[i])
        return 0j

    def assert_norm(self) -> None:
        n = self.norm_sq()
        if abs(n - 1.0) > NORM_TOLERANCE:
            raise AssertionError(f"norm drifted: |psi|^2 = {n!r}")

    def _set(
        self,
        labels: np.ndarray,
        amps: np.ndarray,
        check_norm: bool = True,
        may_collide: bool = True,
    ) -> None:
        keep = (amps.real**2 + amps.imag**2) >= PRUNE_THRESHOLD**2
        if not np.all(keep):
            labels, amps = labels[keep], amps[keep]
        if may_collide and len(labels) > 1:
            uniq, inverse = np.unique(labels, return_inverse=True)
            if len(uniq) != len(labels):
                merged = np.zeros(len(uniq), dtype=np.complex128)
                np.add.at(merged, inverse, amps)
                keep = (merged.real**2 + merged.imag**2) >= PRUNE_THRESHOLD**2
                labels, amps = uniq[keep], merged[keep]
            else:
                order = np.argsort(labels, kind="stable")
                labels, amps = labels[order], amps[order]
            self._sorted = True
        else:
            self._sorted = bool(len(labels) < 2)
        if len(labels) > self.support_cap:
            raise ResourceError(
                f"support {len(labels)} exceeds cap {self.support_cap}"
            )
        self.labels, self.amps = labels, amps
        if check_norm and self.strict_norm:
            self.assert_norm()

    def dense_vector(self) -> np.ndarray:
        if self.layout.total_width > 24:
            raise ResourceError("dense vector only supported for small layouts")
        out = np.zeros(1 << self.layout.total_width, dtype=np.complex128)
        out[self.labels.astype(np.int64)] = self.amps
        return out

    def dump(self) -> str:
        """Diffable text form: one 'regname=bits ...: re,im' line per label."""
        lines = []
        for lab, amp in zip(self.labels, self.amps):
            parts = []
            for name in self.layout.order:
                v = int(self.layout.extract(np.array([lab]), name)[0])
                parts.append(f"{name}={v:0{self.layout.width(name)}b}")
            lines.append(f"{' '.join(parts)}: {amp.real:.12e},{amp.imag:.12e}")
        return "\n".join(sorted(lines))


def init_state(layout: RegisterLayout, support_cap: int = DEFAULT_SUPPORT_CAP) -> SparseState:
    return SparseState(
        layout,
        np.array([0], dtype=np.uint64),
        np.array([1.0 + 0j], dtype=np.complex128),
        support_cap,
    )


def state_from_amplitudes(
    layout: RegisterLayout, pairs: Iterable[Tuple[int, complex]],
    support_cap: int = DEFAULT_SUPPORT_CAP,
) -> SparseState:
    pairs = list(pairs)
    labels = np.array([p[0] for p in pairs], dtype=np.uint64)
    amps = np.array([p[1] for p in pairs], dtype=np.complex128)
    st = SparseState(layout, labels, amps, support_cap)
    st._set(st.labels, st.amps, check_norm=True)
    return st


# ---------------------------------------------------------------------------
# Predicates over register values (classical reads of basis labels)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Predicate:
    reads: frozenset
    describe: str
    fn: Callable[[RegisterLayout, np.ndarray], np.ndarray] = field(compare=False)

    def eval(self, layout: RegisterLayout, labels: np.ndarray) -> np.ndarray:
        return self.fn(layout, labels)


def reg_equals(reg: str, value: int) -> Predicate:
    return Predicate(
        reads=frozenset([reg]),
        describe=f"{reg}=={value}",
        fn=lambda lay, labs: lay.extract(labs, reg) == _u(value),
    )


def regs_all_zero(regs: Sequence[str]) -> Predicate:
    regs = tuple(regs)
    if not regs:
        return p_const(True)

    def fn(lay, labs):
        mask = 0
        for r in regs:
            mask |= ((1 << lay.width(r)) - 1) << lay.offset(r)
        return (labs & _u(mask)) == _u(0)

    return Predicate(frozenset(regs), f"({','.join(regs)})==0", fn)


def reg_bit_equals_const(reg: str, bit: int, value: int) -> Predicate:
    return Predicate(
        frozenset([reg]),
        f"{reg}[{bit}]=={value}",
        lambda lay, labs: ((lay.extract(labs, reg) >> _u(bit)) & _u(1)) == _u(value),
    )


def reg_bit_equals_reg_bit(reg_a: str, bit_a: int, reg_b: str, bit_b: int) -> Predicate:
    def fn(lay, labs):
        a = (lay.extract(labs, reg_a) >> _u(bit_a)) & _u(1)
        b = (lay.extract(labs, reg_b) >> _u(bit_b)) & _u(1)
        return a == b

    return Predicate(
        frozenset([reg_a, reg_b]), f"{reg_a}[{bit_a}]=={reg_b}[{bit_b}]", fn
    )


def p_and(*preds: Predicate) -> Predicate:
    def fn(lay, labs):
        ok = np.ones(len(labs), dtype=bool)
        for p in preds:
            ok &= p.fn(lay, labs)
        return ok

    return Predicate(
        frozenset().union(*(p.reads for p in preds)),
        " & ".join(p.describe for p in preds),
        fn,
    )


def p_const(value: bool) -> Predicate:
    return Predicate(
        frozenset(), str(value), lambda lay, labs: np.full(len(labs), value, dtype=bool)
    )


def reg_in_set(reg: str, values: Sequence[int]) -> Predicate:
    vals = np.array(sorted(set(int(v) for v in values)), dtype=np.uint64)
    return Predicate(
        frozenset([reg]),
        f"{reg} in {vals.tolist()}",
        lambda lay, labs: np.isin(lay.extract(labs, reg), vals),
    )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleBinding:
    """Oracle applied as |x>|z> -> |x>|z xor O(x)| over named registers."""

    oracle: object  # needs in_width, out_width, eval_many(np.ndarray)->np.ndarray
    input_regs: tuple
    output_regs: tuple

    def validate(self, layout: RegisterLayout) -> None:
        for r in self.input_regs + self.output_regs:
            layout.check(r)
        if layout.group_width(self.input_regs) != self.oracle.in_width:
            raise LayoutError(
                f"input width {layout.group_width(self.input_regs)} != oracle in_width {self.oracle.in_width}"
            )
        if layout.group_width(self.output_regs) != self.oracle.out_width:
            raise LayoutError(
                f"output width {layout.group_width(self.output_regs)} != oracle out_width {self.oracle.out_width}"
            )


def binding(oracle, input_regs: Sequence[str], output_regs) -> OracleBinding:
    if isinstance(output_regs, str):
        output_regs = (output_regs,)
    return OracleBinding(oracle, tuple(input_regs), tuple(output_regs))


_HADAMARD_CACHE: dict = {}


def _hadamard_matrix(w: int) -> np.ndarray:
    if w not in _HADAMARD_CACHE:
        idx = np.arange(1 << w, dtype=np.uint64)
        par = np.bitwise_count(idx[:, None] & idx[None, :]).astype(np.int64) & 1
        _HADAMARD_CACHE[w] = ((1.0 - 2.0 * par) / math.sqrt(2.0**w)).astype(np.complex128)
    return _HADAMARD_CACHE[w]


class Operation:
    """Base class: apply() mutates (labels, amps) arrays; all are involutions."""

    writes: frozenset = frozenset()
    may_collide: bool = True  # False for pure label permutations

    def transform(self, layout, labels, amps):
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


def _group_hadamard(layout, labels, amps, regs):
    """Walsh-Hadamard on the concatenated bits of the given registers.

    The transform matrix for the w concatenated bits is the tensor power of
    the single-bit transform, so one grouped pass equals per-register passes.
    Unstable sorting is fine: every (group, sub) slot is written exactly once.
    """
    w = layout.group_width(regs)
    mask = 0
    for r in regs:
        mask |= ((1 << layout.width(r)) - 1) << layout.offset(r)
    sub = layout.extract_group(labels, regs).astype(np.int64)
    rest = labels & _u(~mask)
    if len(labels) > 1:
        order = np.argsort(rest)
        rest_s, sub_s, amps_s = rest[order], sub[order], amps[order]
        boundary = np.empty(len(rest_s), dtype=bool)
        boundary[0] = True
        np.not_equal(rest_s[1:], rest_s[:-1], out=boundary[1:])
        group_id = np.cumsum(boundary) - 1
        group_keys = rest_s[boundary]
    else:
        sub_s, amps_s = sub, amps
        group_id = np.zeros(len(labels), dtype=np.int64)
        group_keys = rest
    dense = np.zeros((len(group_keys), 1 << w), dtype=np.complex128)
    dense[group_id, sub_s] = amps_s
    out = dense @ _hadamard_matrix(w)
    thresh = (PRUNE_THRESHOLD / 4) ** 2
    g_idx, t_idx = np.nonzero((out.real**2 + out.imag**2) >= thresh)
    new_labels = group_keys[g_idx] | layout.scatter_group(t_idx.astype(np.uint64), regs)
    return new_labels, out[g_idx, t_idx]


@dataclass(frozen=True)
class Hadamard(Operation):
    reg: str
    # output labels are distinct (group, target) pairs, never colliding
    may_collide = False

    @property
    def writes(self):
        return frozenset([self.reg])

    def transform(self, layout, labels, amps):
        return _group_hadamard(layout, labels, amps, (self.reg,))

    def describe(self):
        return f"H({self.reg})"


@dataclass(frozen=True)
class HadamardMulti(Operation):
    """Per-register Walsh-Hadamard on several registers, fused in one pass."""

    regs: tuple
    may_collide = False

    @property
    def writes(self):
        return frozenset(self.regs)

    def transform(self, layout, labels, amps):
        return _group_hadamard(layout, labels, amps, self.regs)

    def describe(self):
        return f"H({','.join(self.regs)})"


@dataclass(frozen=True)
class XFlip(Operation):
    """Flip bits of a register (all bits by default, or a chosen subset)."""

    reg: str
    bits: Optional[tuple] = None
    may_collide = False

    @property
    def writes(self):
        return frozenset([self.reg])

    def _mask(self, layout) -> int:
        off, w = layout.offset(self.reg), layout.width(self.reg)
        if self.bits is None:
            return ((1 << w) - 1) << off
        m = 0
        for b in self.bits:
            if not 0 <= b < w:
                raise LayoutError(f"bit {b} out of range for {self.reg}")
            m |= 1 << (off + b)
        return m

    def transform(self, layout, labels, amps):
        return labels ^ _u(self._mask(layout)), amps

    def describe(self):
        sel = "" if self.bits is None else f",bits={list(self.bits)}"
        return f"X({self.reg}{sel})"


@dataclass(frozen=True)
class SwapRegs(Operation):
    """Swap the contents of two register groups of equal total width."""

    regs_a: tuple
    regs_b: tuple
    may_collide = False

    @property
    def writes(self):
        return frozenset(self.regs_a) | frozenset(self.regs_b)

    def transform(self, layout, labels, amps):
        wa = layout.group_width(self.regs_a)
        if wa != layout.group_width(self.regs_b):
            raise LayoutError("swap requires equal widths")
        va = layout.extract_group(labels, self.regs_a)
        vb = layout.extract_group(labels, self.regs_b)
        labels = labels ^ layout.scatter_group(va ^ vb, self.regs_a)
        labels = labels ^ layout.scatter_group(va ^ vb, self.regs_b)
        return labels, amps

    def describe(self):
        return f"SWAP({','.join(self.regs_a)};{','.join(self.regs_b)})"


@dataclass(frozen=True)
class OracleXor(Operation):
    bind: OracleBinding
    may_collide = False

    @property
    def writes(self):
        return frozenset(self.bind.output_regs)

    def transform(self, layout, labels, amps):
        self.bind.validate(layout)
        x = layout.extract_group(labels, self.bind.input_regs)
        y = self.bind.oracle.eval_many(x).astype(np.uint64)
        labels = labels ^ layout.scatter_group(y, self.bind.output_regs)
        return labels, amps

    def describe(self):
        name = getattr(self.bind.oracle, "name", type(self.bind.oracle).__name__)
        return f"Q[{name}]({','.join(self.bind.input_regs)}->{','.join(self.bind.output_regs)})"


@dataclass(frozen=True)
class Controlled(Operation):
    pred: Predicate
    inner: Operation

    @property
    def writes(self):
        return self.inner.writes

    @property
    def may_collide(self):
        return self.inner.may_collide

    def transform(self, layout, labels, amps):
        if self.pred.reads & self.inner.writes:
            raise LayoutError(
                f"controlled op writes registers its predicate reads: "
                f"{sorted(self.pred.reads & self.inner.writes)}"
            )
        sel = self.pred.eval(layout, labels)
        if not np.any(sel):
            return labels, amps
        in_labels, in_amps = self.inner.transform(layout, labels[sel], amps[sel])
        return (
            np.concatenate([labels[~sel], in_labels]),
            np.concatenate([amps[~sel], in_amps]),
        )

    def describe(self):
        return f"C[{self.pred.describe}]{{{self.inner.describe()}}}"


def apply_op(state: SparseState, op: Operation) -> SparseState:
    labels, amps = op.transform(state.layout, state.labels, state.amps)
    state._set(labels, amps, may_collide=op.may_collide)
    return state


def apply_ops(state: SparseState, ops: Iterable[Operation]) -> SparseState:
    for op in ops:
        apply_op(state, op)
    return state


def apply_hadamard(state: SparseState, reg: str) -> SparseState:
    state.layout.check(reg)
    return apply_op(state, Hadamard(reg))


def apply_x(state: SparseState, reg: str, bits: Optional[Sequence[int]] = None) -> SparseState:
    state.layout.check(reg)
    return apply_op(state, XFlip(reg, None if bits is None else tuple(bits)))


def apply_oracle_xor(state: SparseState, bind: OracleBinding) -> SparseState:
    return apply_op(state, OracleXor(bind))


def apply_controlled(state: SparseState, pred: Predicate, inner: Operation) -> SparseState:
    return apply_op(state, Controlled(pred, inner))


def apply_inverse(state: SparseState, recorded: Sequence[Operation]) -> SparseState:
    """Invert a recorded sequence: reverse order, each op self-inverted."""
    for op in recorded:
        if not isinstance(op, Operation):
            raise NotInvertibleError(f"sequence contains non-invertible entry: {op!r}")
    for op in reversed(list(recorded)):
        apply_op(state, op)
    return state


# ---------------------------------------------------------------------------
# Measurement, projection, overlap
# ---------------------------------------------------------------------------

def measure(state: SparseState, reg: str, rng: np.random.Generator) -> int:
    """Born-rule measurement of one register; collapses in place.

    Consumes exactly one uniform draw from rng.
    """
    state.layout.check(reg)
    values = state.layout.extract(state.labels, reg)
    weights = state.amps.real**2 + state.amps.imag**2
    uniq, inverse = np.unique(values, return_inverse=True)
    probs = np.zeros(len(uniq))
    np.add.at(probs, inverse, weights)
    u = float(rng.random()) * float(probs.sum())
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, len(uniq) - 1)
    outcome = int(uniq[idx])
    keep = values == uniq[idx]
    amps = state.amps[keep] / math.sqrt(float(probs[idx]))
    state._set(state.labels[keep], amps, check_norm=False)
    return outcome


def project_expect(state: SparseState, reg: str, value: int) -> float:
    """Probability weight of the register holding the given value."""
    state.layout.check(reg)
    sel = state.layout.extract(state.labels, reg) == _u(value)
    a = state.amps[sel]
    return float(np.sum(a.real**2 + a.imag**2))


def postselect(state: SparseState, pred: Predicate) -> float:
    """Project onto pred-true labels and renormalize; returns the weight."""
    sel = pred.eval(state.layout, state.labels)
    a = state.amps[sel]
    w = float(np.sum(a.real**2 + a.imag**2))
    if w <= 0.0:
        raise ValueError("postselection on zero-weight subspace")
    state._set(state.labels[sel], a / math.sqrt(w), check_norm=False)
    return w


def superpose(states: Sequence[SparseState], coeffs: Sequence[complex]) -> SparseState:
    """Linear combination of states on one layout (caller owns normalization)."""
    if len(states) != len(coeffs) or not states:
        raise ValueError("need matching, nonempty states and coefficients")
    lay = states[0].layout
    for s in states[1:]:
        if not s.layout.same_as(lay):
            raise LayoutError("superpose requires identical layouts")
    labels = np.concatenate([s.labels for s in states])
    amps = np.concatenate([np.complex128(c) * s.amps for s, c in zip(states, coeffs)])
    cap = max(s.support_cap for s in states)
    out = SparseState(lay, labels, amps, cap)
    out._set(out.labels, out.amps, check_norm=False, may_collide=True)
    return out


def overlap(a: SparseState, b: SparseState) -> complex:
    """<a|b> over the sparse supports; layouts must match."""
    if not a.layout.same_as(b.layout):
        raise LayoutError("overlap requires identical layouts")
    common, ia, ib = np.intersect1d(
        a.labels, b.labels, assume_unique=True, return_indices=True
    )
    if len(common) == 0:
        return 0j
    return complex(np.sum(np.conj(a.amps[ia]) * b.amps[ib]))


def fidelity(a: SparseState, b: SparseState) -> float:
    return abs(overlap(a, b)) ** 2


# ---------------------------------------------------------------------------
# Product / embedding helpers
# ---------------------------------------------------------------------------

def with_layout(state: SparseState, new_layout: RegisterLayout) -> SparseState:
    """Rename registers without moving bits (same order and widths)."""
    old_w = [state.layout.width(n) for n in state.layout.order]
    new_w = [new_layout.width(n) for n in new_layout.order]
    if old_w != new_w:
        raise LayoutError("relabeling requires identical register widths in order")
    return SparseState(new_layout, state.labels.copy(), state.amps.copy(), state.support_cap)


def embed(state: SparseState, big: RegisterLayout, support_cap: int = DEFAULT_SUPPORT_CAP) -> SparseState:
    """Embed into a larger layout (same-named registers; others |0>)."""
    for n in state.layout.order:
        big.check(n)
        if big.width(n) != state.layout.width(n):
            raise LayoutError(f"register {n!r} width differs in target layout")
    new_labels = np.zeros(len(state.labels), dtype=np.uint64)
    for n in state.layout.order:
        vals = state.layout.extract(state.labels, n)
        new_labels |= vals << _u(big.offset(n))
    out = SparseState(big, new_labels, state.amps.copy(), support_cap)
    out._set(out.labels, out.amps)
    return out


def product(a: SparseState, b: SparseState, target: RegisterLayout,
            support_cap: int = DEFAULT_SUPPORT_CAP) -> SparseState:
    """Tensor product; target layout must contain both register sets."""
    if set(a.layout.order) & set(b.layout.order):
        raise LayoutError("product requires disjoint register names")
    la = np.zeros(len(a.labels), dtype=np.uint64)
    for n in a.layout.order:
        la |= a.layout.extract(a.labels, n) << _u(target.offset(n))
    lb = np.zeros(len(b.labels), dtype=np.uint64)
    for n in b.layout.order:
        lb |= b.layout.extract(b.labels, n) << _u(target.offset(n))
    labels = (la[:, None] | lb[None, :]).reshape(-1)
    amps = (a.amps[:, None] * b.amps[None, :]).reshape(-1)
    out = SparseState(target, labels, amps, support_cap)
    out._set(out.labels, out.amps)
    return out


def project_onto_reference(
    state: SparseState, reference: SparseState, sub_regs: Sequence[str]
) -> Tuple[float, SparseState]:
    """Rank-1 projective measurement |ref><ref| on a register subset.

    Returns the success probability and the renormalized residual state over
    the complement registers. ``reference`` must live on exactly sub_regs
    (any widths matching the host layout).
    """
    sub_regs = list(sub_regs)
    if list(reference.layout.order) != sub_regs:
        raise LayoutError("reference layout must match sub_regs order")
    others = [n for n in state.layout.order if n not in sub_regs]
    if not others:
        raise LayoutError("projection must leave at least one register")
    sub_lay = reference.layout
    sub_vals = np.zeros(len(state.labels), dtype=np.uint64)
    for n in sub_regs:
        if state.layout.width(n) != sub_lay.width(n):
            raise LayoutError(f"register {n!r} width mismatch")
        sub_vals |= state.layout.extract(state.labels, n) << _u(sub_lay.offset(n))
    # coefficient of each support label of the reference
    pos = np.searchsorted(reference.labels, sub_vals)
    pos = np.clip(pos, 0, len(reference.labels) - 1)
    hit = reference.labels[pos] == sub_vals
    coeff = np.where(hit, np.conj(reference.amps[pos]), 0j)
    rest_lay = RegisterLayout([(n, state.layout.width(n)) for n in others])
    rest_vals = np.zeros(len(state.labels), dtype=np.uint64)
    for n in others:
        rest_vals |= state.layout.extract(state.labels, n) << _u(rest_lay.offset(n))
    uniq, inverse = np.unique(rest_vals, return_inverse=True)
    res_amps = np.zeros(len(uniq), dtype=np.complex128)
    np.add.at(res_amps, inverse, coeff * state.amps)
    prob = float(np.sum(res_amps.real**2 + res_amps.imag**2))
    if prob <= 0.0:
        raise ValueError("projection has zero success probability")
    out = SparseState(rest_lay, uniq, res_amps / math.sqrt(prob), state.support_cap)
    out._set(out.labels, out.amps, check_norm=False)
    return prob, out


def extract_registers(state: SparseState, regs: Sequence[str]) -> SparseState:
    """Marginal onto regs; the complement must be in a single basis state."""
    regs = list(regs)
    others = [n for n in state.layout.order if n not in regs]
    if others:
        rest = state.layout.extract_group(state.labels, others)
        if len(np.unique(rest)) != 1:
            raise ValueError("complement registers are not in a basis state")
    sub_layout = RegisterLayout([(n, state.layout.width(n)) for n in regs])
    vals = np.zeros(len(state.labels), dtype=np.uint64)
    for n in regs:
        vals |= state.layout.extract(state.labels, n) << _u(sub_layout.offset(n))
    out = SparseState(sub_layout, vals, state.amps.copy(), state.support_cap)
    out._set(out.labels, out.amps)
    return out
