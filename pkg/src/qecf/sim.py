"""Reference (tableau) execution and bit-packed Pauli-frame sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .circuit import Circuit, CircuitError, Instruction
from .pauli import CX, H, H_YZ, PauliString, Tableau

CHUNK_SHOTS = 1 << 14


class NondeterministicDetectorError(CircuitError):
    """A detector's noiseless parity depends on a random outcome."""


# ---------------------------------------------------------------- tableau execution


def _pauli_from_terms(n: int, terms: Sequence[tuple[str, int]]) -> PauliString:
    return PauliString.from_sparse(n, terms)


class _Executor:
    """Runs a circuit on a tableau, tracking how outcomes depend on records."""

    def __init__(self, c: Circuit, seed: int = 0):
        self.c = c
        self.n = max(c.num_qubits, 1)
        self.tab = Tableau(self.n, np.random.default_rng(seed))
        self.bits: list[int] = []
        self.det: list[bool] = []
        self.deps: list[np.ndarray] = []

    def step(self, ins: Instruction) -> list[int]:
        """Execute one instruction; return new record indices."""
        t = self.tab
        op = ins.op
        if op == "CX":
            ts = ins.targets
            for k in range(0, len(ts), 2):
                t.apply(CX(ts[k], ts[k + 1]))
        elif op == "H":
            for q in ins.targets:
                t.apply(H(q))
        elif op == "H_YZ":
            for q in ins.targets:
                t.apply(H_YZ(q))
        elif op == "R":
            for q in ins.targets:
                t.reset(q, "Z")
        elif op == "RX":
            for q in ins.targets:
                t.reset(q, "X")
        elif op in ("M", "MPP"):
            if op == "M":
                paulis = [PauliString.single(self.n, q, "Z") for q in ins.targets]
            else:
                paulis = [_pauli_from_terms(self.n, prod) for prod in ins.products]
            start = len(self.bits)
            for p in paulis:
                bit, det, dep = t.measure(p)
                self.bits.append(bit)
                self.det.append(det)
                self.deps.append(np.nonzero(dep)[0] if det else np.zeros(0, dtype=np.int64))
            return list(range(start, len(self.bits)))
        return []

    def peek_dependence(self, p: PauliString) -> tuple[bool, int, list[int]]:
        """Determinism, value and record dependence of ``p`` without measuring."""
        t = self.tab
        n = t.n
        anti = t._anti(p)
        if anti[n:].any():
            return False, -1, []
        js = np.nonzero(anti[:n])[0]
        bit, _, rows = t._product_outcome(p, js)
        if len(rows):
            dep = np.logical_xor.reduce(t.dep[rows], axis=0)[: t.num_records]
        else:
            dep = np.zeros(0, dtype=bool)
        return True, bit, [int(r) for r in np.nonzero(dep)[0]]


def resolve_detectors(c: Circuit) -> Circuit:
    """Turn detector requests into explicit DETECTOR lines.

    A requested record becomes a detector iff the noiseless run finds it
    deterministic.  Its value is an affine function of earlier random
    outcomes.  The detector compares against the previous measurement of the
    same check when that has the same function, else stands alone when the
    function is constant, else pairs with the most recent record carrying the
    same function.  Only if all of these fail does it fall back to the raw
    record set the tableau reports.
    """
    ex = _Executor(c)
    wanted = {r.rec: r for r in c.detector_requests}
    forms: list[int] = []
    latest: dict[int, int] = {}
    by_key: dict[tuple, int] = {}
    out = Circuit()
    for q, coord in c.qubits.items():
        out.add_qubit(q, coord)
    for ins in c.instructions:
        new = ex.step(ins)
        out.append(ins)
        for m in new:
            if ex.det[m]:
                v = 0
                for r in ex.deps[m]:
                    v ^= forms[int(r)]
            else:
                v = 1 << m
            req = wanted.get(m)
            if req is not None and ex.det[m]:
                prev = by_key.get(req.key) if req.key is not None else None
                if prev is not None and forms[prev] == v:
                    recs = {m, prev}
                elif v == 0:
                    recs = {m}
                elif v in latest:
                    recs = {m, latest[v]}
                else:
                    recs = set(int(r) for r in ex.deps[m]) | {m}
                out.detector(recs, req.basis, req.post)
            if req is not None and req.key is not None:
                by_key[req.key] = m
            forms.append(v)
            latest[v] = m
    return out


def logical_record_dependence(c: Circuit, upto: int, paulis: Sequence[tuple[str, int]]) -> list[int]:
    """Records fixing the value of a logical Pauli after instruction ``upto``.

    The logical must be deterministic there (the caller prepares the matching
    eigenstate); raises otherwise.
    """
    ex = _Executor(c)
    for ins in c.instructions[:upto]:
        ex.step(ins)
    det, _, recs = ex.peek_dependence(_pauli_from_terms(ex.n, paulis))
    if not det:
        raise CircuitError("logical operator is not deterministic in the probe run")
    return recs


@dataclass
class ReferenceTrace:
    bits: np.ndarray
    deterministic: np.ndarray
    detector_parity: np.ndarray
    observable_deterministic: list[bool]
    observable_value: list[int]
    num_qubits: int
    values: list[int] = field(default_factory=list, repr=False)

    @property
    def num_detectors(self) -> int:
        return len(self.detector_parity)


def reference_run(c: Circuit, seed: int = 0) -> ReferenceTrace:
    """Noiseless tableau execution with detector determinism checks."""
    ex = _Executor(c, seed)
    values: list[int] = []  # affine dependence on random outcomes as a bitmask
    det_par: list[int] = []
    obs_det: list[bool] = []
    obs_val: list[int] = []
    for ins in c.instructions:
        new = ex.step(ins)
        for m in new:
            if ex.det[m]:
                v = 0
                for r in ex.deps[m]:
                    v ^= values[int(r)]
                values.append(v)
            else:
                values.append(1 << m)
        if ins.op == "DETECTOR":
            v = 0
            par = 0
            for r in ins.recs:
                v ^= values[r]
                par ^= ex.bits[r]
            if v:
                raise NondeterministicDetectorError(f"detector over {list(ins.recs)} is not deterministic")
            det_par.append(par)
        elif ins.op == "OBSERVABLE_INCLUDE":
            v = 0
            par = 0
            det = True
            for r in ins.recs:
                v ^= values[r]
                par ^= ex.bits[r]
            if ins.paulis:
                d, bit, deps = ex.peek_dependence(_pauli_from_terms(ex.n, ins.paulis))
                det = d
                if d:
                    par ^= bit
                    for r in deps:
                        v ^= values[r]
            det = det and v == 0
            obs_det.append(det)
            obs_val.append(par if det else -1)
    return ReferenceTrace(
        np.array(ex.bits, dtype=np.uint8),
        np.array(ex.det, dtype=bool),
        np.array(det_par, dtype=np.uint8),
        obs_det,
        obs_val,
        ex.n,
        values,
    )


def tableau_run(c: Circuit, errors: dict[int, list[tuple[int, int]]] | None = None, forced: dict[int, int] | None = None, seed: int = 0) -> list[int]:
    """Execute ``c`` on a tableau with explicit Pauli errors.

    ``errors`` maps an instruction index to ``(qubit, pauli_code)`` pairs
    applied at that position (codes 1=X, 2=Z, 3=Y).  ``forced`` fixes the
    outcome of chosen records, which couples random outcomes between runs.
    Returns the measurement bits.
    """
    ex = _Executor(c, seed)
    errors = errors or {}
    forced = forced or {}
    for k, ins in enumerate(c.instructions):
        if ins.op in ("M", "MPP") and forced:
            t = ex.tab
            paulis = (
                [PauliString.single(ex.n, q, "Z") for q in ins.targets]
                if ins.op == "M"
                else [_pauli_from_terms(ex.n, prod) for prod in ins.products]
            )
            for p in paulis:
                m = len(ex.bits)
                bit, det, dep = t.measure(p, forced=forced.get(m))
                ex.bits.append(bit)
                ex.det.append(det)
                ex.deps.append(np.zeros(0, dtype=np.int64))
        else:
            ex.step(ins)
        for q, code in errors.get(k, ()):
            kind = {1: "X", 2: "Z", 3: "Y"}[code]
            ex.tab.apply_pauli(PauliString.single(ex.n, q, kind))
    return ex.bits


# ---------------------------------------------------------------- frame sampling


@dataclass
class CompiledCircuit:
    num_qubits: int
    num_measurements: int
    ops: list[tuple]
    detectors: list[np.ndarray]
    detector_basis: np.ndarray  # 0 = Z-type check, 1 = X-type check
    detector_post: np.ndarray
    noise_sites: list[tuple[int, str, np.ndarray, float]]  # (instr index, kind, targets, p)


def compile_circuit(c: Circuit) -> CompiledCircuit:
    ops: list[tuple] = []
    dets: list[np.ndarray] = []
    basis: list[int] = []
    post: list[bool] = []
    sites = []
    nm = 0
    for k, ins in enumerate(c.instructions):
        op = ins.op
        arr = np.array(ins.targets, dtype=np.int64)
        if op == "CX":
            ops.append(("cx", arr[0::2], arr[1::2]))
        elif op == "H":
            ops.append(("h", arr))
        elif op == "H_YZ":
            ops.append(("hyz", arr))
        elif op in ("R", "RX"):
            ops.append(("reset", arr))
        elif op == "M":
            ops.append(("m", arr, nm))
        elif op == "MPP":
            prods = []
            for prod in ins.products:
                xs = np.array([q for kd, q in prod if kd in "XY"], dtype=np.int64)
                zs = np.array([q for kd, q in prod if kd in "ZY"], dtype=np.int64)
                prods.append((xs, zs))
            ops.append(("mpp", prods, nm))
        elif op == "DEPOLARIZE1":
            ops.append(("dep1", arr, ins.arg, len(sites)))
            sites.append((k, "DEPOLARIZE1", arr, ins.arg))
        elif op == "DEPOLARIZE2":
            pairs = arr.reshape(-1, 2)
            ops.append(("dep2", pairs, ins.arg, len(sites)))
            sites.append((k, "DEPOLARIZE2", pairs, ins.arg))
        elif op == "DETECTOR":
            dets.append(np.array(ins.recs, dtype=np.int64))
            basis.append(1 if ins.basis == "X" else 0)
            post.append(ins.post)
        elif op == "OBSERVABLE_INCLUDE":
            xs = np.array([q for kd, q in ins.paulis if kd in "ZY"], dtype=np.int64)  # Z terms see X errors
            zs = np.array([q for kd, q in ins.paulis if kd in "XY"], dtype=np.int64)
            ops.append(("obs", ins.index, xs, zs, np.array(ins.recs, dtype=np.int64)))
        nm += ins.num_measurements
    return CompiledCircuit(
        max(c.num_qubits, 1),
        nm,
        ops,
        dets,
        np.array(basis, dtype=np.uint8),
        np.array(post, dtype=bool),
        sites,
    )


@dataclass
class ShotBatch:
    shots: int
    detectors: np.ndarray  # (num_detectors, words) uint64, bit s of word w = shot 64w+s
    observables: np.ndarray  # (2, words)
    discard: np.ndarray  # (words,)

    def unpack(self, arr: np.ndarray) -> np.ndarray:
        """Packed (k, words) -> bool (k, shots)."""
        bits = np.unpackbits(arr.view(np.uint8).reshape(arr.shape[0], -1), axis=1, bitorder="little")
        return bits[:, : self.shots].astype(bool)

    @property
    def num_discards(self) -> int:
        return int(self.unpack(self.discard[None, :])[0].sum())


# A noise hook receives (site index, shots, words, rng) and returns flat indices
# of hit (target, shot) cells plus a Pauli code per hit.
NoiseHook = Callable[[int, int, int], tuple[np.ndarray, np.ndarray]]


def _xor_hits(fx: np.ndarray, fz: np.ndarray, qs: np.ndarray, shots: np.ndarray, xbit: np.ndarray, zbit: np.ndarray) -> None:
    words = shots >> 6
    masks = np.left_shift(np.uint64(1), (shots & 63).astype(np.uint64))
    if xbit.any():
        np.bitwise_xor.at(fx, (qs[xbit], words[xbit]), masks[xbit])
    if zbit.any():
        np.bitwise_xor.at(fz, (qs[zbit], words[zbit]), masks[zbit])


def _bernoulli_positions(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Exact i.i.d. Bernoulli(p) hit positions in ``range(total)`` via geometric gaps."""
    if p <= 0 or total == 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(total, dtype=np.int64)
    out = []
    pos = -1
    expect = int(total * p + 6 * np.sqrt(total * p + 1) + 16)
    while True:
        gaps = rng.geometric(p, size=expect)
        cand = pos + np.cumsum(gaps)
        keep = cand[cand < total]
        out.append(keep)
        if len(keep) < len(cand):
            break
        pos = int(cand[-1])
    return np.concatenate(out).astype(np.int64)


def run_frames(
    cc: CompiledCircuit,
    shots: int,
    rng: np.random.Generator | None = None,
    forced: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None,
) -> ShotBatch:
    """Propagate Pauli frames for ``shots`` shots.

    With ``rng`` every noise site is sampled; with ``forced`` only listed
    errors are applied: site index -> (target index, shot, pauli code).
    For DEPOLARIZE1 codes are 1=X, 2=Z, 3=Y; for DEPOLARIZE2 the code is
    ``c1 + 4*c2`` with single-qubit codes c1 (first qubit) and c2.
    """
    W = (shots + 63) // 64
    n = cc.num_qubits
    fx = np.zeros((n, W), dtype=np.uint64)
    fz = np.zeros((n, W), dtype=np.uint64)
    rec = np.zeros((max(cc.num_measurements, 1), W), dtype=np.uint64)
    obs = np.zeros((2, W), dtype=np.uint64)
    for op in cc.ops:
        kind = op[0]
        if kind == "cx":
            _, cs, ts = op
            fx[ts] ^= fx[cs]
            fz[cs] ^= fz[ts]
        elif kind == "h":
            qs = op[1]
            tmp = fx[qs].copy()
            fx[qs] = fz[qs]
            fz[qs] = tmp
        elif kind == "hyz":
            qs = op[1]
            fx[qs] ^= fz[qs]
        elif kind == "reset":
            qs = op[1]
            fx[qs] = 0
            fz[qs] = 0
        elif kind == "m":
            _, qs, start = op
            rec[start:start + len(qs)] = fx[qs]
        elif kind == "mpp":
            _, prods, start = op
            for k, (xs, zs) in enumerate(prods):
                acc = np.zeros(W, dtype=np.uint64)
                if len(xs):
                    acc ^= np.bitwise_xor.reduce(fz[xs], axis=0)
                if len(zs):
                    acc ^= np.bitwise_xor.reduce(fx[zs], axis=0)
                rec[start + k] = acc
        elif kind in ("dep1", "dep2"):
            site = op[3]
            if forced is not None:
                hit = forced.get(site)
                if hit is None:
                    continue
                tidx, sh, code = hit
            else:
                if rng is None:
                    continue
                p = op[2]
                ntar = len(op[1])
                pos = _bernoulli_positions(rng, ntar * shots, p)
                if pos.size == 0:
                    continue
                tidx = pos // shots
                sh = pos % shots
                code = rng.integers(1, 4 if kind == "dep1" else 16, size=pos.size)
            if kind == "dep1":
                qs = op[1][tidx]
                _xor_hits(fx, fz, qs, sh, (code & 1).astype(bool), (code & 2).astype(bool))
            else:
                pairs = op[1][tidx]
                c1 = code & 3
                c2 = code >> 2
                _xor_hits(fx, fz, pairs[:, 0], sh, (c1 & 1).astype(bool), (c1 & 2).astype(bool))
                _xor_hits(fx, fz, pairs[:, 1], sh, (c2 & 1).astype(bool), (c2 & 2).astype(bool))
        elif kind == "obs":
            _, idx, xs, zs, recs = op
            acc = np.zeros(W, dtype=np.uint64)
            if len(xs):
                acc ^= np.bitwise_xor.reduce(fx[xs], axis=0)
            if len(zs):
                acc ^= np.bitwise_xor.reduce(fz[zs], axis=0)
            if len(recs):
                acc ^= np.bitwise_xor.reduce(rec[recs], axis=0)
            obs[idx] ^= acc
    det = np.zeros((len(cc.detectors), W), dtype=np.uint64)
    for k, recs in enumerate(cc.detectors):
        det[k] = np.bitwise_xor.reduce(rec[recs], axis=0)
    # clear padding bits beyond ``shots``
    if shots % 64:
        pad = np.uint64((1 << (shots % 64)) - 1)
        det[:, -1] &= pad
        obs[:, -1] &= pad
    discard = np.zeros(W, dtype=np.uint64)
    if cc.detector_post.any():
        discard = np.bitwise_or.reduce(det[cc.detector_post], axis=0)
    return ShotBatch(shots, det, obs, discard)


def frame_sample(c: Circuit | CompiledCircuit, shots: int, seed: int, chunk_index: int = 0) -> ShotBatch:
    """Sample ``shots`` noisy shots; the stream is keyed by ``(seed, chunk_index)``."""
    cc = c if isinstance(c, CompiledCircuit) else compile_circuit(c)
    rng = np.random.default_rng([int(seed), int(chunk_index)])
    return run_frames(cc, shots, rng=rng)


def measurement_flips(cc: CompiledCircuit, forced: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]], shots: int) -> np.ndarray:
    """Per-record flip bits (records x shots) under forced errors."""
    taps = CompiledCircuit(
        cc.num_qubits,
        cc.num_measurements,
        cc.ops,
        [np.array([m]) for m in range(cc.num_measurements)],
        np.zeros(cc.num_measurements, dtype=np.uint8),
        np.zeros(cc.num_measurements, dtype=bool),
        cc.noise_sites,
    )
    b = run_frames(taps, shots, forced=forced)
    return b.unpack(b.detectors)
