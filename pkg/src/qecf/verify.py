"""Symbolic stabilizer-flow certificates and encoder checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .builders import (
    Frame,
    build_local_growth,
    build_nonlocal_growth,
)
from .circuit import Circuit, Instruction
from .geometry import CodeLayout, LogicalState, regular_layout, rotated_layout
from .pauli import CX, H, H_YZ, PauliString, conjugate

CoordMap = Callable[[tuple[int, int]], tuple[int, int]]


class UnsupportedInstructionError(ValueError):
    """Flow verification only handles resets and Clifford gates."""


@dataclass
class FlowCertificate:
    input_layout: str
    output_layout: str
    generator_witness: list[tuple[list[int], int]] = field(default_factory=list)
    logical_witness: dict[str, tuple[list[int], int]] = field(default_factory=dict)
    passed: bool = False
    counterexample: str | None = None

    def to_json(self) -> dict:
        return {
            "input": self.input_layout,
            "output": self.output_layout,
            "passed": self.passed,
            "counterexample": self.counterexample,
            "generators": [{"product_of": w, "sign": s} for w, s in self.generator_witness],
            "logicals": {k: {"product_of": w, "sign": s} for k, (w, s) in self.logical_witness.items()},
        }


class _Span:
    """Row-echelon basis of Pauli strings with exact phases and provenance."""

    def __init__(self, n: int):
        self.n = n
        self.rows: dict[int, tuple[PauliString, int]] = {}  # lead bit -> (pauli, combo mask)

    def _key(self, p: PauliString) -> int:
        return p.x_bits | (p.z_bits << self.n)

    def reduce(self, p: PauliString, combo: int = 0) -> tuple[PauliString, int]:
        for lead in sorted(self.rows, reverse=True):
            if (self._key(p) >> lead) & 1:
                row, rc = self.rows[lead]
                p = p * row
                combo ^= rc
        return p, combo

    def add(self, p: PauliString, combo: int) -> bool:
        p, combo = self.reduce(p, combo)
        key = self._key(p)
        if key == 0:
            return False
        self.rows[key.bit_length() - 1] = (p, combo)
        return True

    def member(self, p: PauliString) -> tuple[bool, int, list[int]]:
        """(is member up to sign, sign, generator indices) for Hermitian ``p``."""
        r, combo = self.reduce(p)
        if self._key(r) != 0:
            return False, 0, []
        # p * prod(rows) = i^phase * I  =>  prod(rows) = i^phase * p^-1 = i^phase * p
        sign = 1 if r.phase == 0 else -1 if r.phase == 2 else 0
        return True, sign, [k for k in range(combo.bit_length()) if (combo >> k) & 1]


def _gate_list(frag: Circuit) -> tuple[list, dict[int, str]]:
    gates = []
    fresh: dict[int, str] = {}
    for ins in frag.instructions:
        op = ins.op
        if op in ("TICK", "NOISE_ON", "NOISE_OFF", "DEPOLARIZE1", "DEPOLARIZE2"):
            continue
        if op == "CX":
            ts = ins.targets
            gates.extend(CX(ts[k], ts[k + 1]) for k in range(0, len(ts), 2))
        elif op == "H":
            gates.extend(H(q) for q in ins.targets)
        elif op == "H_YZ":
            gates.extend(H_YZ(q) for q in ins.targets)
        elif op in ("R", "RX"):
            for q in ins.targets:
                if any(q in g.qubits for g in gates):
                    raise UnsupportedInstructionError("reset after use is not a unitary flow")
                fresh[q] = "Z" if op == "R" else "X"
        else:
            raise UnsupportedInstructionError(f"{op} is not allowed in a flow fragment")
    return gates, fresh


def verify_stabilizer_flow(
    frag: Circuit,
    src: CodeLayout,
    dst: CodeLayout,
    src_map: CoordMap,
    dst_map: CoordMap,
) -> FlowCertificate:
    """Certify that ``frag`` maps code ``src`` (plus fresh qubits) onto code ``dst``.

    ``src_map``/``dst_map`` send layout coordinates to the fragment's qubit
    coordinates.  Conjugated input stabilizers and fresh-qubit stabilizers must
    generate exactly the output stabilizer group with +1 signs, and the
    conjugated logicals must equal the output logicals up to stabilizers.
    """
    cert = FlowCertificate(src.name, dst.name)
    gates, fresh = _gate_list(frag)
    n = max(frag.num_qubits, 1)
    by_coord = {coord: q for q, coord in frag.qubits.items()}

    def op(layout: CodeLayout, cmap: CoordMap, kind: str, coords: Sequence) -> PauliString:
        return PauliString.from_sparse(n, ((kind, by_coord[cmap(c)]) for c in coords))

    def evolve(p: PauliString) -> PauliString:
        for g in gates:
            p = conjugate(p, g)
        return p

    inputs = [op(src, src_map, f.kind, f.support) for f in src.faces]
    inputs += [PauliString.single(n, q, kind) for q, kind in sorted(fresh.items())]
    span = _Span(n)
    for k, p in enumerate(inputs):
        if not span.add(evolve(p), 1 << k):
            cert.counterexample = f"input generator {k} became dependent"
            return cert
    targets = [op(dst, dst_map, f.kind, f.support) for f in dst.faces]
    if len(span.rows) != len(targets):
        cert.counterexample = f"rank mismatch: {len(span.rows)} evolved vs {len(targets)} output generators"
        return cert
    for f, t in zip(dst.faces, targets):
        ok, sign, combo = span.member(t)
        if not ok:
            cert.counterexample = f"output {f.kind}-face at {f.center} is not generated"
            return cert
        if sign != 1:
            cert.counterexample = f"output {f.kind}-face at {f.center} appears with sign {sign}"
            return cert
        cert.generator_witness.append((combo, sign))
    for name, kind, sl, dl in (
        ("X_L", "X", src.logical_x, dst.logical_x),
        ("Z_L", "Z", src.logical_z, dst.logical_z),
    ):
        moved = evolve(op(src, src_map, kind, sl))
        target = op(dst, dst_map, kind, dl)
        ok, sign, combo = span.member(moved * target)
        if not ok or sign != 1:
            cert.counterexample = f"{name} is not mapped to the output {name}"
            return cert
        cert.logical_witness[name] = (combo, sign)
    cert.passed = True
    return cert


# ---------------------------------------------------------------- standard certificates


def certify_nonlocal(d: int, frag: Circuit | None = None) -> FlowCertificate:
    """rot d -> rot 2d-1 through the two-stage circuit."""
    frag = frag if frag is not None else build_nonlocal_growth(d)
    return verify_stabilizer_flow(
        frag, rotated_layout(d), rotated_layout(2 * d - 1), lambda c: c, lambda c: (c[0] // 2, c[1] // 2)
    )


def stage1_fragment(frag: Circuit) -> Circuit:
    """Instructions of a non-local growth fragment up to the second reset layer."""
    out = Circuit()
    for q, coord in frag.qubits.items():
        out.add_qubit(q, coord)
    resets = 0
    for ins in frag.instructions:
        if ins.op in ("R", "RX") and ins is not None:
            if resets >= 1 and _is_second_layer(frag, ins):
                break
        out.append(ins)
        if ins.op in ("R", "RX"):
            resets += 1
    return out


def _is_second_layer(frag: Circuit, ins: Instruction) -> bool:
    seen_cx = False
    for other in frag.instructions:
        if other is ins:
            return seen_cx
        if other.op == "CX":
            seen_cx = True
    return False


def certify_stage1(d: int) -> FlowCertificate:
    """rot d -> reg d by the first two CX layers alone."""
    frag = stage1_fragment(build_nonlocal_growth(d))
    return verify_stabilizer_flow(frag, rotated_layout(d), regular_layout(d), lambda c: c, lambda c: c)


def certify_stage2(d: int) -> FlowCertificate:
    """reg d -> rot 2d-1 by the last two CX layers."""
    full = build_nonlocal_growth(d)
    first = stage1_fragment(full)
    rest = Circuit()
    for q, coord in full.qubits.items():
        rest.add_qubit(q, coord)
    for ins in full.instructions[len(first.instructions):]:
        rest.append(ins)
    return verify_stabilizer_flow(rest, regular_layout(d), rotated_layout(2 * d - 1), lambda c: c, lambda c: (c[0] // 2, c[1] // 2))


def certify_local(d: int, frag: Circuit | None = None) -> FlowCertificate:
    """rot d -> rot d+2 by the boundary-ring circuit."""
    frag = frag if frag is not None else build_local_growth(d)
    return verify_stabilizer_flow(
        frag, rotated_layout(d), rotated_layout(d + 2), lambda c: (c[0] + 2, c[1] + 2), lambda c: c
    )


def flip_cx(frag: Circuit, which: int = 0) -> Circuit:
    """Copy of ``frag`` with the orientation of its ``which``-th CX reversed."""
    out = Circuit()
    for q, coord in frag.qubits.items():
        out.add_qubit(q, coord)
    k = 0
    for ins in frag.instructions:
        if ins.op == "CX":
            ts = list(ins.targets)
            for j in range(0, len(ts), 2):
                if k == which:
                    ts[j], ts[j + 1] = ts[j + 1], ts[j]
                k += 1
            ins = Instruction("CX", tuple(ts))
        out.append(ins)
    return out


# ---------------------------------------------------------------- encoders


def target_logical(layout: CodeLayout, state: LogicalState, qubit_of: Callable[[tuple[int, int]], int], n: int) -> PauliString:
    xl = PauliString.from_sparse(n, (("X", qubit_of(c)) for c in layout.logical_x))
    zl = PauliString.from_sparse(n, (("Z", qubit_of(c)) for c in layout.logical_z))
    if state is LogicalState.ZERO:
        return zl
    if state is LogicalState.PLUS:
        return xl
    if state is LogicalState.PLUS_I:
        return PauliString(n, 0, 0, 1) * xl * zl
    raise ValueError(f"no stabilizer observable for {state}")


@dataclass
class EncoderReport:
    passed: bool
    stabilizers_ok: bool
    logical_ok: bool
    detail: str = ""


def verify_encoder(
    c: Circuit,
    layout: CodeLayout,
    state: LogicalState | str,
    coord_map: CoordMap = lambda c: c,
    logical_state: LogicalState | str | None = None,
) -> EncoderReport:
    """Noiseless tableau run: every stabilizer and the target logical read +1.

    ``logical_state`` selects which logical is checked (defaults to ``state``);
    checking X_L on a |0_L> preparation fails, as it should.
    """
    from .sim import _Executor

    state = LogicalState(state)
    check = LogicalState(logical_state) if logical_state is not None else state
    ex = _Executor(c)
    for ins in c.instructions:
        if ins.op in ("M", "MPP"):
            raise UnsupportedInstructionError("encoder check expects a measurement-free circuit")
        ex.step(ins)
    by_coord = {coord: q for q, coord in c.qubits.items()}
    qubit_of = lambda xy: by_coord[tuple(coord_map(xy))]  # noqa: E731
    n = ex.n
    stab_ok = True
    for f in layout.faces:
        p = PauliString.from_sparse(n, ((f.kind, qubit_of(q)) for q in f.support))
        det, bit, _ = ex.peek_dependence(p)
        if not det or bit != 0:
            stab_ok = False
            return EncoderReport(False, False, False, f"{f.kind}-face at {f.center} not +1")
    logical = target_logical(layout, check, qubit_of, n)
    det, bit, _ = ex.peek_dependence(logical)
    log_ok = det and bit == 0
    detail = "" if log_ok else ("logical not deterministic" if not det else "logical reads -1")
    return EncoderReport(stab_ok and log_ok, stab_ok, log_ok, detail)


# ---------------------------------------------------------------- fault audits


@dataclass
class FaultAudit:
    mechanisms: int
    considered: int  # excludes faults that always trigger post-selection
    undetectable_logical: list[str]
    corrected: int
    uncorrected: list[str]
    undetected_pairs: list[tuple[str, str]]

    @property
    def all_corrected(self) -> bool:
        return self.corrected == self.considered

    def summary(self) -> str:
        return (
            f"mechanisms={self.mechanisms} considered={self.considered} corrected={self.corrected} "
            f"undetectable_logical={len(self.undetectable_logical)} "
            f"undetected_pairs={len(self.undetected_pairs)}"
        )


def single_fault_audit(c: Circuit, pair_limit: int = 20) -> FaultAudit:
    """Decode every single fault and probe fault pairs for silent logical errors.

    A fault counts as corrected when the matcher predicts both observable
    flips exactly.  A pair of faults is silent when their combined syndrome
    is empty but some observable flips; faults with equal syndromes and
    different observable effects are exactly such pairs, so grouping by
    syndrome finds all of them in linear time.  At most ``pair_limit``
    examples are kept.
    """
    import numpy as np

    from .decode import build_decoding_graph, decode_batch, enumerate_mechanisms
    from .sim import compile_circuit

    cc = compile_circuit(c)
    mechs = enumerate_mechanisms(cc)
    g, _ = build_decoding_graph(mechs, len(cc.detectors), cc.detector_basis, cc.detector_post)
    kept = [m for m in mechs if not m.post]
    silent = [m.label for m in kept if not m.z_dets and not m.x_dets and (m.flip0 or m.flip1)]
    bits = np.zeros((len(cc.detectors), len(kept)), dtype=bool)
    for k, m in enumerate(kept):
        bits[list(m.z_dets + m.x_dets), k] = True
    pred = decode_batch(g, bits)
    wrong = [m.label for k, m in enumerate(kept) if (pred[0, k], pred[1, k]) != (m.flip0, m.flip1)]

    classes: dict[tuple, dict[tuple[bool, bool], str]] = {}
    pairs: list[tuple[str, str]] = []
    for m in mechs:
        key = tuple(sorted(m.z_dets + m.x_dets))
        effects = classes.setdefault(key, {})
        flips = (m.flip0, m.flip1)
        if flips not in effects:
            for other in effects.values():
                if len(pairs) < pair_limit:
                    pairs.append((other, f"{m.label}@{m.instruction}"))
            effects[flips] = f"{m.label}@{m.instruction}"
    return FaultAudit(len(mechs), len(kept), silent, len(kept) - len(wrong), wrong, pairs)
